#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pie/errors.hpp"
#include "pie/report.hpp"

namespace pie {

namespace {

double cmc_at(const EvalReport& r, std::size_t rank) {
  if (r.cmc.values.empty()) return 0.0;
  const std::size_t i = std::min(rank, r.cmc.values.size()) - 1;
  return r.cmc.values[i];
}

}  // namespace

void write_summary_csv(const std::vector<NamedReport>& reports,
                       const std::string& path) {
  if (reports.empty()) throw ValidationError("no reports to summarize");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write summary '" + path + "'");
  out << "config,rank1,rank5,rank10,rank20,mAP,skipped_queries\n";
  for (const auto& [name, r] : reports)
    out << name << ',' << cmc_at(r, 1) << ',' << cmc_at(r, 5) << ','
        << cmc_at(r, 10) << ',' << cmc_at(r, 20) << ',' << r.mean_ap << ','
        << r.skipped_queries << '\n';
}

void write_cmc_svg(const std::vector<NamedReport>& reports,
                   const std::string& path) {
  if (reports.empty()) throw ValidationError("no reports to plot");
  constexpr int kW = 640, kH = 420;
  constexpr int kLeft = 60, kRight = 180, kTop = 30, kBottom = 50;
  const int plot_w = kW - kLeft - kRight;
  const int plot_h = kH - kTop - kBottom;
  const std::size_t max_rank =
      std::max<std::size_t>(1, reports.front().report.cmc.values.size());

  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ofstream out(path);
  if (!out) throw IoError("cannot write SVG '" + path + "'");
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << " " << kH
      << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH
      << "\" fill=\"white\"/>\n";

  // Axes.
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 10; tick += 2) {
    const double frac = tick / 10.0;
    const int y = kTop + plot_h - static_cast<int>(frac * plot_h);
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << std::fixed
        << std::setprecision(1) << frac << "</text>\n";
    out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft
        << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
  }
  for (std::size_t rank = 1; rank <= max_rank;
       rank += std::max<std::size_t>(1, max_rank / 10)) {
    const double frac = max_rank > 1
                            ? static_cast<double>(rank - 1) /
                                  static_cast<double>(max_rank - 1)
                            : 0.0;
    const int x = kLeft + static_cast<int>(frac * plot_w);
    out << "<text x=\"" << x << "\" y=\"" << kTop + plot_h + 18
        << "\" font-size=\"11\" text-anchor=\"middle\">" << rank
        << "</text>\n";
  }
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kH - 12
      << "\" font-size=\"13\" text-anchor=\"middle\">rank</text>\n";
  out << "<text x=\"18\" y=\"" << kTop + plot_h / 2
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << kTop + plot_h / 2 << ")\">matching rate</text>\n";

  for (std::size_t ri = 0; ri < reports.size(); ++ri) {
    const auto& cmc = reports[ri].report.cmc.values;
    const char* color = kColors[ri % 8];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < cmc.size(); ++k) {
      const double fx = cmc.size() > 1
                            ? static_cast<double>(k) /
                                  static_cast<double>(cmc.size() - 1)
                            : 0.0;
      const double x = kLeft + fx * plot_w;
      const double y = kTop + plot_h - cmc[k] * plot_h;
      out << x << ',' << y << ' ';
    }
    out << "\"/>\n";
    const int ly = kTop + 16 + static_cast<int>(ri) * 18;
    out << "<line x1=\"" << kLeft + plot_w + 12 << "\" y1=\"" << ly - 4
        << "\" x2=\"" << kLeft + plot_w + 36 << "\" y2=\"" << ly - 4
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kLeft + plot_w + 42 << "\" y=\"" << ly
        << "\" font-size=\"11\">" << reports[ri].name << "</text>\n";
  }
  out << "</svg>\n";
}

void emit_report_from_dir(const std::string& in_dir,
                          const std::string& out_csv) {
  namespace fs = std::filesystem;
  std::vector<NamedReport> reports;
  std::vector<fs::path> report_files;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 11 && name.ends_with(".report.csv"))
      report_files.push_back(entry.path());
  }
  std::sort(report_files.begin(), report_files.end());

  for (const auto& rf : report_files) {
    std::string label = rf.filename().string();
    label.resize(label.size() - 11);  // strip ".report.csv"

    NamedReport named;
    named.name = label;
    std::ifstream in(rf);
    std::string line;
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      const std::string key = line.substr(0, comma);
      const std::string value = line.substr(comma + 1);
      if (key == "mAP") named.report.mean_ap = std::stod(value);
      if (key == "skipped_queries")
        named.report.skipped_queries = std::stoul(value);
      if (key.starts_with("ap_"))
        named.report.per_query_ap.push_back(std::stod(value));
    }

    const fs::path cmc_path = rf.parent_path() / (label + ".cmc.csv");
    if (fs::exists(cmc_path)) {
      std::ifstream cmc_in(cmc_path);
      std::getline(cmc_in, line);  // header
      while (std::getline(cmc_in, line)) {
        const auto comma = line.find(',');
        if (comma != std::string::npos)
          named.report.cmc.values.push_back(std::stod(line.substr(comma + 1)));
      }
    }
    reports.push_back(std::move(named));
  }

  if (reports.empty())
    throw ValidationError("no *.report.csv files found in '" + in_dir + "'");
  write_summary_csv(reports, out_csv);
  const fs::path svg_path = fs::path(out_csv).replace_extension(".svg");
  write_cmc_svg(reports, svg_path.string());
}

}  // namespace pie
