#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mhscreen/corpus.hpp"

namespace mhscreen {

struct PredictionRecord {
  std::string participant_id;
  Disorder disorder = Disorder::mde;
  int decision = 0;   // 0 or 1
  double score = 0.0; // in [0, 1]
  std::string method_tag;
};

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t n() const { return tp + fp + fn + tn; }
};

// Undefined metrics (zero denominators) stay disengaged rather than being
// reported as zero; the imbalanced splits can produce zero-positive folds.
struct MetricsReport {
  Disorder disorder = Disorder::mde;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  std::size_t n() const { return tp + fp + fn + tn; }
};

// Counts predictions for one disorder against ground truth. Throws DataError
// when a prediction's participant is missing from labels or when the same
// (participant, method_tag) appears twice for the disorder.
Confusion confusion(const std::vector<PredictionRecord>& preds,
                    const std::map<std::string, LabelSet>& labels,
                    Disorder disorder);

MetricsReport metrics_from_confusion(const Confusion& c, Disorder disorder);

MetricsReport compute_metrics(const std::vector<PredictionRecord>& preds,
                              const std::map<std::string, LabelSet>& labels,
                              Disorder disorder);

// ---------------------------------------------------------------------------
// Result tables. Rows are models or sweep points, columns are disorder-major
// metric blocks; each layout fixes its own metric order.
//   main:        Acc, Rec, F1
//   chunk_sweep: Recall, F1, Accuracy
//   rank_sweep:  Acc, Recall, F1
//   head_sweep:  Recall, F1, Acc
// Disorder blocks always run Depression, PTSD, Anxiety.
// ---------------------------------------------------------------------------

enum class TableLayout { main, chunk_sweep, rank_sweep, head_sweep };

TableLayout parse_layout(const std::string& name);
const std::string& layout_name(TableLayout layout);

struct ReportGrid {
  TableLayout layout = TableLayout::main;
  std::vector<std::string> row_labels; // render order

  // A key that is absent means the grid is incomplete (a layout error at
  // render time); a present key holding nullopt marks a failed sweep point
  // and renders as an em dash.
  std::map<std::pair<std::string, Disorder>, std::optional<MetricsReport>>
      cells;

  void add_row(const std::string& label);
  void set(const std::string& row, Disorder d,
           std::optional<MetricsReport> report);
};

// Fixed-width plain-text table. Values use 3 decimals, undefined metrics
// render as "undef", failed cells as an em dash. Throws std::invalid_argument
// listing every missing cell when the grid is incomplete.
std::string render_table(const ReportGrid& grid);

// Long-format CSV: layout,row,disorder,metric,value with one row per count
// and metric per cell. Floats use shortest round-trip formatting; undefined
// metrics carry the value "undefined". Failed cells are skipped.
std::string render_csv(const ReportGrid& grid);

// Rebuilds per-cell reports from render_csv output (the round-trip check).
std::map<std::pair<std::string, std::string>, MetricsReport>
parse_report_csv(const std::string& csv);

} // namespace mhscreen
