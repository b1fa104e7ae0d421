#include "jedi/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "jedi/error.hpp"
#include "jedi/kvdoc.hpp"

namespace jedi {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right = false) {
  if (s.size() >= width) return s;
  return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write " + path.string());
  out << text;
  if (!out) throw ReportError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("missing file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_field(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(",\n\r") != std::string::npos) {
    throw ReportError(std::string("curve ") + what + " '" + s + "' must be non-empty without commas");
  }
}

const char* model_label(const std::string& model) {
  if (model == "expert") return "Initial Experts";
  if (model == "student") return "Students";
  if (model == "teacher") return "Teachers";
  return nullptr;
}

}  // namespace

std::vector<CurveRow> curve_rows(const std::vector<MetricsSnapshot>& history,
                                 const std::vector<std::string>& dataset_names) {
  std::vector<CurveRow> rows;
  auto name = [&](std::size_t ds) {
    return ds < dataset_names.size() ? dataset_names[ds] : "dataset" + std::to_string(ds);
  };
  for (const MetricsSnapshot& s : history) {
    for (const auto& [key, v] : s.values) {
      for (auto [metric, value] : {std::pair{"acc1", v.acc1}, {"acc5", v.acc5}, {"map", v.map}}) {
        rows.push_back({s.epoch, key.model, name(key.dataset), key.split, metric, value});
      }
    }
    for (std::size_t j = 0; j < s.kd.size(); ++j) {
      rows.push_back({s.epoch, "loss", name(j), "train", "student_cls", s.student_cls[j]});
      rows.push_back({s.epoch, "loss", name(j), "train", "teacher_cls", s.teacher_cls[j]});
      rows.push_back({s.epoch, "loss", name(j), "train", "kd", s.kd[j]});
    }
    if (s.epoch >= 0 && !s.kd.empty()) {
      rows.push_back({s.epoch, "loss", "all", "train", "total", s.loss});
      rows.push_back({s.epoch, "loss", "all", "train", "skipped",
                      static_cast<double>(s.skipped_samples)});
    }
  }
  return rows;
}

std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::string out = std::string(kCurvesHeader) + "\n";
  for (const CurveRow& r : rows) {
    check_field(r.model, "model");
    check_field(r.dataset, "dataset");
    check_field(r.split, "split");
    check_field(r.metric, "metric");
    out += std::to_string(r.epoch) + "," + r.model + "," + r.dataset + "," + r.split + "," +
           r.metric + "," + format_double(r.value) + "\n";
  }
  return out;
}

void write_curves_csv(const fs::path& path, const std::vector<CurveRow>& rows) {
  write_text(path, curves_csv(rows));
}

std::vector<CurveRow> parse_curves_csv(const std::string& text, const std::string& origin) {
  std::vector<CurveRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kCurvesHeader) {
        throw ReportError(origin + ":1: expected header '" + std::string(kCurvesHeader) + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    auto bad = [&](const std::string& why) {
      return ReportError(origin + ":" + std::to_string(line_no) + ": " + why);
    };
    if (f.size() != 6) throw bad("expected 6 fields, got " + std::to_string(f.size()));
    CurveRow r;
    try {
      std::size_t used = 0;
      r.epoch = std::stoi(f[0], &used);
      if (used != f[0].size()) throw std::invalid_argument("epoch");
      r.value = std::stod(f[5], &used);
      if (used != f[5].size()) throw std::invalid_argument("value");
    } catch (const std::exception&) {
      throw bad("malformed number in '" + line + "'");
    }
    r.model = f[1];
    r.dataset = f[2];
    r.split = f[3];
    r.metric = f[4];
    if (r.model.empty() || r.dataset.empty() || r.split.empty() || r.metric.empty()) {
      throw bad("empty field in '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  if (line_no == 0) throw ReportError(origin + ": empty curves file");
  return rows;
}

std::vector<CurveRow> read_curves_csv(const fs::path& path) {
  return parse_curves_csv(read_text(path), path.string());
}

FinalTable final_table(const std::vector<CurveRow>& rows) {
  FinalTable t;
  for (const CurveRow& r : rows) {
    if (r.model == "loss") continue;
    t.epoch = std::max(t.epoch, r.epoch);
  }
  // Experts are constant; take them from any epoch so an untrained run shows them.
  for (const CurveRow& r : rows) {
    if (r.model == "loss" || (r.epoch != t.epoch && r.model != "expert")) continue;
    if (std::find(t.datasets.begin(), t.datasets.end(), r.dataset) == t.datasets.end()) {
      t.datasets.push_back(r.dataset);
    }
    MetricValues& v = t.values[{r.model, r.dataset, r.split}];
    if (r.metric == "acc1") v.acc1 = r.value;
    if (r.metric == "acc5") v.acc5 = r.value;
    if (r.metric == "map") v.map = r.value;
  }
  return t;
}

FinalTable final_table(const MetricsReport& report) {
  return final_table(curve_rows({report.final_snapshot}, report.dataset_names));
}

std::string render_table(const FinalTable& table, const std::string& split) {
  const std::size_t label_w = 17, cell_w = 8;
  std::string out = pad("", label_w);
  for (const std::string& d : table.datasets) out += "| " + pad(d, 3 * cell_w);
  out += "\n" + pad("Model", label_w);
  for (std::size_t i = 0; i < table.datasets.size(); ++i) {
    out += "| " + pad("acc@1", cell_w) + pad("acc@5", cell_w) + pad("mAP", cell_w);
  }
  out += "\n" + std::string(label_w + table.datasets.size() * (3 * cell_w + 2), '-') + "\n";
  for (const char* model : {"expert", "student", "teacher"}) {
    bool any = false;
    std::string line = pad(model_label(model), label_w);
    for (const std::string& d : table.datasets) {
      auto it = table.values.find({model, d, split});
      line += "| ";
      if (it == table.values.end()) {
        line += pad("-", cell_w) + pad("-", cell_w) + pad("-", cell_w);
        continue;
      }
      any = true;
      line += pad(fixed(100.0 * it->second.acc1, 2), cell_w) +
              pad(fixed(100.0 * it->second.acc5, 2), cell_w) +
              pad(fixed(100.0 * it->second.map, 2), cell_w);
    }
    if (any) out += line + "\n";
  }
  return out;
}

std::string report_kv(const FinalTable& table) {
  KvDoc doc;
  doc.set("epoch", std::to_string(table.epoch));
  for (const auto& [key, v] : table.values) {
    const auto& [model, dataset, split] = key;
    const std::string prefix = model + "." + dataset + "." + split + ".";
    doc.set(prefix + "acc1", format_double(v.acc1));
    doc.set(prefix + "acc5", format_double(v.acc5));
    doc.set(prefix + "map", format_double(v.map));
  }
  return doc.to_string();
}

std::string render_svg(const std::vector<CurveRow>& rows, const std::string& dataset,
                       const std::string& split, const std::string& metric) {
  struct Series {
    const char* model;
    const char* label;
    const char* color;
    std::vector<std::pair<int, double>> points;
  };
  std::vector<Series> series{{"student", "student", "#1f77b4", {}},
                             {"teacher", "teacher", "#d62728", {}},
                             {"expert", "initial expert", "#555555", {}}};
  int min_epoch = 0, max_epoch = 0;
  bool first = true;
  double lo = 1.0, hi = 0.0;
  for (const CurveRow& r : rows) {
    if (r.dataset != dataset || r.split != split || r.metric != metric) continue;
    for (Series& s : series) {
      if (r.model != s.model) continue;
      s.points.emplace_back(r.epoch, r.value);
      if (first) min_epoch = max_epoch = r.epoch;
      first = false;
      min_epoch = std::min(min_epoch, r.epoch);
      max_epoch = std::max(max_epoch, r.epoch);
      lo = std::min(lo, r.value);
      hi = std::max(hi, r.value);
    }
  }
  if (first) {
    throw ReportError("no '" + metric + "' rows for dataset '" + dataset + "' on split " + split);
  }
  lo = std::max(0.0, std::floor((lo - 0.02) * 20.0) / 20.0);
  hi = std::min(1.0, std::ceil((hi + 0.02) * 20.0) / 20.0);
  if (hi <= lo) hi = lo + 0.05;

  const double w = 640, h = 400, left = 60, right = 20, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  const double span_x = std::max(1, max_epoch - min_epoch);
  auto sx = [&](double e) { return left + pw * (e - min_epoch) / span_x; };
  auto sy = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << dataset
      << " (" << split << " " << metric << ")</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = lo + (hi - lo) * i / 5.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << sy(v) << "\" y2=\""
        << sy(v) << "\" stroke=\"#e0e0e0\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << sy(v) + 4 << "\" text-anchor=\"end\">"
        << fixed(100.0 * v, 1) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double e = min_epoch + span_x * i / 5.0;
    svg << "<text x=\"" << sx(e) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
        << static_cast<long>(std::lround(e)) << "</text>\n";
  }
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\">epoch</text>\n";

  double legend_y = top + 16;
  for (const Series& s : series) {
    if (s.points.empty()) continue;
    const bool baseline = std::string(s.model) == "expert";
    const std::string dash = baseline ? " stroke-dasharray=\"6 4\"" : "";
    if (baseline) {
      const double v = s.points.front().second;
      svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << sy(v) << "\" y2=\""
          << sy(v) << "\" stroke=\"" << s.color << "\"" << dash << "/>\n";
    } else {
      svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [e, v] : s.points) svg << sx(e) << "," << sy(v) << " ";
      svg << "\"/>\n";
      if (s.points.size() == 1) {
        svg << "<circle cx=\"" << sx(s.points[0].first) << "\" cy=\"" << sy(s.points[0].second)
            << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
      }
    }
    svg << "<line x1=\"" << left + pw - 130 << "\" x2=\"" << left + pw - 110 << "\" y1=\""
        << legend_y << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"" << dash << "/>\n";
    svg << "<text x=\"" << left + pw - 104 << "\" y=\"" << legend_y + 4 << "\">" << s.label
        << "</text>\n";
    legend_y += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_run_report(const fs::path& dir, const std::vector<CurveRow>& rows) {
  const FinalTable table = final_table(rows);
  write_text(dir / "table.txt", render_table(table, "test"));
  write_text(dir / "report.kv", report_kv(table));
  for (const std::string& d : table.datasets) {
    bool has_test = std::any_of(rows.begin(), rows.end(), [&](const CurveRow& r) {
      return r.dataset == d && r.split == "test" && r.metric == "acc1";
    });
    if (has_test) write_text(dir / ("curves_" + d + ".svg"), render_svg(rows, d));
  }
}

}  // namespace jedi
