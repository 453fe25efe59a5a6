#include "mhscreen/eval.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "mhscreen/errors.hpp"

namespace mhscreen {

Confusion confusion(const std::vector<PredictionRecord>& preds,
                    const std::map<std::string, LabelSet>& labels,
                    Disorder disorder) {
  Confusion c;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : preds) {
    if (p.disorder != disorder) continue;
    if (!seen.insert({p.participant_id, p.method_tag}).second)
      throw DataError("duplicate prediction for participant \"" +
                      p.participant_id + "\" (" + disorder_name(disorder) +
                      ", tag \"" + p.method_tag + "\")");
    auto it = labels.find(p.participant_id);
    if (it == labels.end())
      throw DataError("prediction for unknown participant \"" +
                      p.participant_id + "\"");
    const int truth = it->second.get(disorder);
    if (p.decision == 1)
      truth == 1 ? ++c.tp : ++c.fp;
    else
      truth == 1 ? ++c.fn : ++c.tn;
  }
  return c;
}

MetricsReport metrics_from_confusion(const Confusion& c, Disorder disorder) {
  if (c.n() == 0)
    throw std::invalid_argument("cannot compute metrics over zero predictions");
  MetricsReport r;
  r.disorder = disorder;
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  r.tn = c.tn;
  r.accuracy = double(c.tp + c.tn) / double(c.n());
  if (c.tp + c.fp > 0) r.precision = double(c.tp) / double(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = double(c.tp) / double(c.tp + c.fn);
  if (r.precision && r.recall && *r.precision + *r.recall > 0.0)
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  return r;
}

MetricsReport compute_metrics(const std::vector<PredictionRecord>& preds,
                              const std::map<std::string, LabelSet>& labels,
                              Disorder disorder) {
  return metrics_from_confusion(confusion(preds, labels, disorder), disorder);
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

namespace {

const std::array<std::string, 4> kLayoutNames = {"main", "chunk_sweep",
                                                 "rank_sweep", "head_sweep"};

std::vector<std::string> metric_headers(TableLayout layout) {
  switch (layout) {
  case TableLayout::main: return {"Acc", "Rec", "F1"};
  case TableLayout::chunk_sweep: return {"Recall", "F1", "Accuracy"};
  case TableLayout::rank_sweep: return {"Acc", "Recall", "F1"};
  case TableLayout::head_sweep: return {"Recall", "F1", "Acc"};
  }
  throw std::logic_error("unreachable");
}

std::optional<double> metric_by_header(const MetricsReport& r,
                                       const std::string& header) {
  if (header == "Acc" || header == "Accuracy") return r.accuracy;
  if (header == "Rec" || header == "Recall") return r.recall;
  return r.f1;
}

constexpr std::size_t kCellW = 10;
constexpr std::size_t kBlockW = 3 * kCellW;
const std::string kDash = "\xE2\x80\x94"; // em dash, display width 1

void pad_to(std::string& line, const std::string& text, std::size_t width,
            std::size_t display_width) {
  line += text;
  if (display_width < width) line.append(width - display_width, ' ');
  else line += ' ';
}

void pad_to(std::string& line, const std::string& text, std::size_t width) {
  pad_to(line, text, width, text.size());
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string fmt_shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void check_complete(const ReportGrid& grid) {
  if (grid.row_labels.empty())
    throw std::invalid_argument("report grid has no rows");
  std::string missing;
  for (const auto& row : grid.row_labels)
    for (Disorder d : kAllDisorders)
      if (!grid.cells.count({row, d})) {
        if (!missing.empty()) missing += ", ";
        missing += "[" + row + " / " + disorder_label(d) + "]";
      }
  if (!missing.empty())
    throw std::invalid_argument("incomplete report grid, missing cells: " +
                                missing);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

} // namespace

TableLayout parse_layout(const std::string& name) {
  for (std::size_t i = 0; i < kLayoutNames.size(); ++i)
    if (kLayoutNames[i] == name) return TableLayout(i);
  throw ConfigError("unknown table layout \"" + name +
                    "\" (available: main, chunk_sweep, rank_sweep, head_sweep)");
}

const std::string& layout_name(TableLayout layout) {
  return kLayoutNames[static_cast<std::size_t>(layout)];
}

void ReportGrid::add_row(const std::string& label) {
  if (std::find(row_labels.begin(), row_labels.end(), label) !=
      row_labels.end())
    throw std::invalid_argument("duplicate row label \"" + label + "\"");
  row_labels.push_back(label);
}

void ReportGrid::set(const std::string& row, Disorder d,
                     std::optional<MetricsReport> report) {
  if (std::find(row_labels.begin(), row_labels.end(), row) ==
      row_labels.end())
    row_labels.push_back(row);
  cells[{row, d}] = std::move(report);
}

std::string render_table(const ReportGrid& grid) {
  check_complete(grid);
  const auto headers = metric_headers(grid.layout);

  std::size_t label_w = std::string("Model").size();
  for (const auto& row : grid.row_labels)
    label_w = std::max(label_w, row.size());
  label_w += 2;

  std::string out;
  {
    std::string line;
    pad_to(line, "Model", label_w);
    for (Disorder d : kAllDisorders) pad_to(line, disorder_label(d), kBlockW);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  {
    std::string line;
    pad_to(line, "", label_w);
    for ([[maybe_unused]] Disorder d : kAllDisorders)
      for (const auto& h : headers) pad_to(line, h, kCellW);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  out += std::string(label_w + 3 * kBlockW, '-') + '\n';

  for (const auto& row : grid.row_labels) {
    std::string line;
    pad_to(line, row, label_w);
    for (Disorder d : kAllDisorders) {
      const auto& cell = grid.cells.at({row, d});
      for (const auto& h : headers) {
        if (!cell) {
          pad_to(line, kDash, kCellW, 1);
        } else {
          auto v = metric_by_header(*cell, h);
          pad_to(line, v ? fmt3(*v) : "undef", kCellW);
        }
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::string render_csv(const ReportGrid& grid) {
  check_complete(grid);
  std::string out = "layout,row,disorder,metric,value\n";
  const auto& lname = layout_name(grid.layout);
  for (const auto& row : grid.row_labels) {
    for (Disorder d : kAllDisorders) {
      const auto& cell = grid.cells.at({row, d});
      if (!cell) continue;
      auto emit = [&](const std::string& metric, const std::string& value) {
        out += lname + "," + csv_field(row) + "," + disorder_name(d) + "," +
               metric + "," + value + "\n";
      };
      emit("tp", std::to_string(cell->tp));
      emit("fp", std::to_string(cell->fp));
      emit("fn", std::to_string(cell->fn));
      emit("tn", std::to_string(cell->tn));
      emit("accuracy", fmt_shortest(cell->accuracy));
      emit("precision",
           cell->precision ? fmt_shortest(*cell->precision) : "undefined");
      emit("recall", cell->recall ? fmt_shortest(*cell->recall) : "undefined");
      emit("f1", cell->f1 ? fmt_shortest(*cell->f1) : "undefined");
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

} // namespace

std::map<std::pair<std::string, std::string>, MetricsReport>
parse_report_csv(const std::string& csv) {
  std::map<std::pair<std::string, std::string>, MetricsReport> out;
  std::size_t pos = 0;
  bool first = true;
  while (pos < csv.size()) {
    auto nl = csv.find('\n', pos);
    if (nl == std::string::npos) nl = csv.size();
    const std::string line = csv.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line != "layout,row,disorder,metric,value")
        throw DataError("unexpected CSV header: " + line);
      continue;
    }
    auto fields = split_csv_line(line);
    if (fields.size() != 5) throw DataError("malformed CSV row: " + line);
    auto& report = out[{fields[1], fields[2]}];
    report.disorder = parse_disorder(fields[2]);
    const auto& metric = fields[3];
    const auto& value = fields[4];
    auto as_count = [&value]() { return std::stoull(value); };
    auto as_opt = [&value]() -> std::optional<double> {
      if (value == "undefined") return std::nullopt;
      return std::stod(value);
    };
    if (metric == "tp") report.tp = as_count();
    else if (metric == "fp") report.fp = as_count();
    else if (metric == "fn") report.fn = as_count();
    else if (metric == "tn") report.tn = as_count();
    else if (metric == "accuracy") report.accuracy = std::stod(value);
    else if (metric == "precision") report.precision = as_opt();
    else if (metric == "recall") report.recall = as_opt();
    else if (metric == "f1") report.f1 = as_opt();
    else throw DataError("unknown metric \"" + metric + "\" in CSV");
  }
  return out;
}

} // namespace mhscreen
