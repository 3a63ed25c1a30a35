#include "ldfs/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ldfs {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

json accuracy_json(const AccuracyReport& a) {
  json per = json::object();
  for (const auto& [domain, acc] : a.per_domain) per[domain] = acc;
  return {{"per_domain", per}, {"average", a.average}};
}

AccuracyReport accuracy_from(const json& j) {
  AccuracyReport a;
  for (const auto& [domain, acc] : j.at("per_domain").items()) a.per_domain[domain] = acc.get<double>();
  a.average = j.at("average").get<double>();
  return a;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  out << text;
}

}  // namespace

json report_to_json(const EvalReport& report) {
  json doc;
  if (report.scores) {
    const auto& s = *report.scores;
    doc["scores"] = {{"da", s.da}, {"da_without_source", s.da_without_source}, {"cc", s.cc}, {"ds", s.ds}, {"rows", s.rows}};
  } else {
    doc["scores"] = nullptr;
  }
  doc["accuracy"] = accuracy_json(report.accuracy);
  doc["zero_shot_accuracy"] = accuracy_json(report.zero_shot_accuracy);
  doc["source_validation_accuracy"] = report.source_validation_accuracy;
  doc["sphere_deviation"] = report.sphere_deviation;
  json gap = json::array();
  for (const auto& p : report.gap_curve) gap.push_back({{"gamma", p.gamma}, {"gap", p.gap}});
  doc["gap_curve"] = gap;
  json nn = json::array();
  for (const auto& r : report.nn_table) {
    nn.push_back({{"instance_id", r.instance_id},
                  {"label", r.label},
                  {"target_domain", r.target_domain},
                  {"nn_instance_id", r.nn_instance_id},
                  {"nn_domain", r.nn_domain},
                  {"nn_label", r.nn_label},
                  {"cosine", r.cosine}});
  }
  doc["nn_table"] = nn;
  return doc;
}

EvalReport report_from_json(const json& doc) {
  EvalReport r;
  try {
    if (!doc.at("scores").is_null()) {
      const auto& s = doc.at("scores");
      r.scores = SynthesisScores{s.at("da").get<double>(), s.at("da_without_source").get<double>(),
                                 s.at("cc").get<double>(), s.at("ds").get<double>(), s.at("rows").get<std::size_t>()};
    }
    r.accuracy = accuracy_from(doc.at("accuracy"));
    r.zero_shot_accuracy = accuracy_from(doc.at("zero_shot_accuracy"));
    r.source_validation_accuracy = doc.at("source_validation_accuracy").get<double>();
    r.sphere_deviation = doc.at("sphere_deviation").get<double>();
    for (const auto& p : doc.at("gap_curve")) r.gap_curve.push_back({p.at("gamma").get<double>(), p.at("gap").get<double>()});
    for (const auto& n : doc.at("nn_table")) {
      r.nn_table.push_back({n.at("instance_id").get<std::string>(), n.at("label").get<int>(),
                            n.at("target_domain").get<int>(), n.at("nn_instance_id").get<std::string>(),
                            n.at("nn_domain").get<int>(), n.at("nn_label").get<int>(), n.at("cosine").get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
  r.validate();
  return r;
}

void save_report(const fs::path& file, const EvalReport& report) {
  write_text(file, report_to_json(report).dump(2) + "\n");
}

EvalReport load_report(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open report " + file.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

std::string gap_curve_svg(const std::vector<GapPoint>& curve) {
  constexpr double W = 480, H = 320, L = 60, R = 20, T = 20, B = 50;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">gamma</text>\n";
  svg << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 15 " << (T + H - B) / 2
      << ")\" text-anchor=\"middle\">modality gap</text>\n";
  if (!curve.empty()) {
    double gx0 = curve.front().gamma, gx1 = gx0, gy0 = curve.front().gap, gy1 = gy0;
    for (const auto& p : curve) {
      gx0 = std::min(gx0, p.gamma);
      gx1 = std::max(gx1, p.gamma);
      gy0 = std::min(gy0, p.gap);
      gy1 = std::max(gy1, p.gap);
    }
    if (gx1 == gx0) gx1 = gx0 + 1.0;
    if (gy1 == gy0) gy1 = gy0 + 1.0;
    auto x = [&](double g) { return L + (g - gx0) / (gx1 - gx0) * (W - L - R); };
    auto y = [&](double v) { return H - B - (v - gy0) / (gy1 - gy0) * (H - T - B); };
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
      svg << (i ? " " : "") << format_number(x(curve[i].gamma)) << "," << format_number(y(curve[i].gap));
    }
    svg << "\"/>\n";
    for (const auto& p : curve) {
      svg << "<circle cx=\"" << format_number(x(p.gamma)) << "\" cy=\"" << format_number(y(p.gap))
          << "\" r=\"3\" fill=\"steelblue\"/>\n";
    }
    svg << "<text x=\"" << L << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
        << format_number(gx0) << "</text>\n";
    svg << "<text x=\"" << W - R << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
        << format_number(gx1) << "</text>\n";
    svg << "<text x=\"" << L - 5 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"10\">" << format_number(gy0)
        << "</text>\n";
    svg << "<text x=\"" << L - 5 << "\" y=\"" << T + 5 << "\" text-anchor=\"end\" font-size=\"10\">" << format_number(gy1)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string accuracy_svg(const EvalReport& report) {
  constexpr double W = 480, H = 320, L = 50, R = 20, T = 20, B = 60;
  const auto& per = report.accuracy.per_domain;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  const double slot = per.empty() ? 0.0 : (W - L - R) / static_cast<double>(per.size());
  std::size_t i = 0;
  for (const auto& [domain, acc] : per) {
    const double zs = report.zero_shot_accuracy.per_domain.count(domain) ? report.zero_shot_accuracy.per_domain.at(domain) : 0.0;
    const double x0 = L + slot * static_cast<double>(i) + slot * 0.1;
    const double bw = slot * 0.4;
    const double plot_h = H - T - B;
    svg << "<rect x=\"" << format_number(x0) << "\" y=\"" << format_number(H - B - acc * plot_h) << "\" width=\""
        << format_number(bw) << "\" height=\"" << format_number(acc * plot_h) << "\" fill=\"steelblue\"/>\n";
    svg << "<rect x=\"" << format_number(x0 + bw) << "\" y=\"" << format_number(H - B - zs * plot_h) << "\" width=\""
        << format_number(bw) << "\" height=\"" << format_number(zs * plot_h) << "\" fill=\"lightgray\"/>\n";
    svg << "<text x=\"" << format_number(x0 + bw) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << domain << "</text>\n";
    ++i;
  }
  svg << "<text x=\"" << L << "\" y=\"" << H - 15 << "\" font-size=\"11\">blue: finetuned, gray: zero-shot</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

void write_report_bundle(const fs::path& dir, const EvalReport& report) {
  fs::create_directories(dir);
  save_report(dir / "report.json", report);

  std::ostringstream acc;
  acc << "domain,accuracy,zero_shot_accuracy\n";
  for (const auto& [domain, a] : report.accuracy.per_domain) {
    const auto zs = report.zero_shot_accuracy.per_domain.find(domain);
    acc << domain << ',' << format_number(a) << ','
        << (zs == report.zero_shot_accuracy.per_domain.end() ? std::string() : format_number(zs->second)) << '\n';
  }
  acc << "average," << format_number(report.accuracy.average) << ',' << format_number(report.zero_shot_accuracy.average)
      << '\n';
  write_text(dir / "accuracy.csv", acc.str());

  std::ostringstream scores;
  scores << "metric,value\n";
  if (report.scores) {
    scores << "da," << format_number(report.scores->da) << '\n';
    scores << "da_without_source," << format_number(report.scores->da_without_source) << '\n';
    scores << "cc," << format_number(report.scores->cc) << '\n';
    scores << "ds," << format_number(report.scores->ds) << '\n';
  }
  scores << "source_validation_accuracy," << format_number(report.source_validation_accuracy) << '\n';
  scores << "sphere_deviation," << format_number(report.sphere_deviation) << '\n';
  write_text(dir / "scores.csv", scores.str());

  std::ostringstream gap;
  gap << "gamma,gap\n";
  for (const auto& p : report.gap_curve) gap << format_number(p.gamma) << ',' << format_number(p.gap) << '\n';
  write_text(dir / "gap_curve.csv", gap.str());

  std::ostringstream nn;
  nn << "instance_id,label,target_domain,nn_instance_id,nn_domain,nn_label,cosine\n";
  for (const auto& r : report.nn_table) {
    nn << r.instance_id << ',' << r.label << ',' << r.target_domain << ',' << r.nn_instance_id << ',' << r.nn_domain << ','
       << r.nn_label << ',' << format_number(r.cosine) << '\n';
  }
  write_text(dir / "nn_table.csv", nn.str());

  write_text(dir / "gap_curve.svg", gap_curve_svg(report.gap_curve));
  write_text(dir / "accuracy.svg", accuracy_svg(report));
}

void write_summary_csv(const fs::path& file, const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "label,da,da_without_source,cc,ds,sphere_deviation,average_accuracy\n";
  for (const auto& row : rows) {
    out << row.label << ',';
    if (row.report.scores) {
      out << format_number(row.report.scores->da) << ',' << format_number(row.report.scores->da_without_source) << ','
          << format_number(row.report.scores->cc) << ',' << format_number(row.report.scores->ds) << ',';
    } else {
      out << ",,,,";
    }
    out << format_number(row.report.sphere_deviation) << ',' << format_number(row.report.accuracy.average) << '\n';
  }
  write_text(file, out.str());
}

}  // namespace ldfs
