#include "cprobe/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace cprobe {
namespace {

std::string fmt(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

const char* role_color(TokenRole r) {
  switch (r) {
    case TokenRole::OBJECT: return "#1f77b4";
    case TokenRole::SUBJECT_Q: return "#d62728";
    case TokenRole::RELATION_Q: return "#2ca02c";
    case TokenRole::FIRST: return "#7f7f7f";
  }
  return "#000000";
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string results_csv(const std::vector<AddressResult>& results) {
  std::ostringstream out;
  out << "layer,module,role,P,WSE,ci_low,ci_high\n";
  for (const auto& r : results)
    out << r.address.layer << ',' << to_string(r.address.module) << ','
        << to_string(r.address.role) << ',' << fmt(r.aggregate.P) << ','
        << fmt(r.aggregate.WSE) << ',' << fmt(r.aggregate.ci_low) << ','
        << fmt(r.aggregate.ci_high) << '\n';
  return out.str();
}

std::string results_svg(const std::vector<AddressResult>& results) {
  constexpr double kPanelW = 320, kPanelH = 240, kMargin = 48, kTop = 40;
  int max_layer = 0;
  for (const auto& r : results) max_layer = std::max(max_layer, r.address.layer);

  std::map<ModuleKind, std::map<TokenRole, std::map<int, const AddressResult*>>> series;
  for (const auto& r : results) series[r.address.module][r.address.role][r.address.layer] = &r;

  const double width = kMargin + static_cast<double>(kAllModules.size()) * (kPanelW + kMargin);
  const double height = kTop + kPanelH + 2 * kMargin + 20;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, 0) << "\" height=\""
      << fmt(height, 0) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t m = 0; m < kAllModules.size(); ++m) {
    const ModuleKind module = kAllModules[m];
    const double x0 = kMargin + static_cast<double>(m) * (kPanelW + kMargin);
    const double y0 = kTop;
    auto px = [&](int layer) {
      return max_layer == 0 ? x0 + kPanelW / 2
                            : x0 + kPanelW * static_cast<double>(layer) / max_layer;
    };
    auto py = [&](double p) { return y0 + kPanelH * (1.0 - std::clamp(p, 0.0, 1.0)); };

    svg << "<text x=\"" << fmt(x0 + kPanelW / 2, 1) << "\" y=\"" << fmt(y0 - 12, 1)
        << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(to_string(module))
        << "</text>\n";
    svg << "<rect x=\"" << fmt(x0, 1) << "\" y=\"" << fmt(y0, 1) << "\" width=\"" << fmt(kPanelW, 1)
        << "\" height=\"" << fmt(kPanelH, 1) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      svg << "<line x1=\"" << fmt(x0, 1) << "\" x2=\"" << fmt(x0 + kPanelW, 1) << "\" y1=\""
          << fmt(py(tick), 1) << "\" y2=\"" << fmt(py(tick), 1)
          << "\" stroke=\"#dddddd\"/>\n";
      svg << "<text x=\"" << fmt(x0 - 4, 1) << "\" y=\"" << fmt(py(tick) + 4, 1)
          << "\" text-anchor=\"end\">" << fmt(tick, 2) << "</text>\n";
    }
    for (int l = 0; l <= max_layer; ++l)
      svg << "<text x=\"" << fmt(px(l), 1) << "\" y=\"" << fmt(y0 + kPanelH + 14, 1)
          << "\" text-anchor=\"middle\">" << l << "</text>\n";
    svg << "<text x=\"" << fmt(x0 + kPanelW / 2, 1) << "\" y=\"" << fmt(y0 + kPanelH + 30, 1)
        << "\" text-anchor=\"middle\">layer</text>\n";

    const auto found = series.find(module);
    if (found == series.end()) continue;
    for (const auto& [role, by_layer] : found->second) {
      const char* color = role_color(role);
      std::ostringstream upper, lower, line;
      for (const auto& [layer, r] : by_layer) {
        upper << fmt(px(layer), 2) << ',' << fmt(py(r->aggregate.ci_high), 2) << ' ';
        line << fmt(px(layer), 2) << ',' << fmt(py(r->aggregate.P), 2) << ' ';
      }
      for (auto it = by_layer.rbegin(); it != by_layer.rend(); ++it)
        lower << fmt(px(it->first), 2) << ',' << fmt(py(it->second->aggregate.ci_low), 2) << ' ';
      svg << "<polygon points=\"" << upper.str() << lower.str() << "\" fill=\"" << color
          << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
      svg << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
    }
  }

  // Legend.
  double lx = kMargin;
  const double ly = height - 14;
  for (auto role : kAllRoles) {
    svg << "<rect x=\"" << fmt(lx, 1) << "\" y=\"" << fmt(ly - 9, 1)
        << "\" width=\"14\" height=\"10\" fill=\"" << role_color(role) << "\"/>\n";
    svg << "<text x=\"" << fmt(lx + 18, 1) << "\" y=\"" << fmt(ly, 1) << "\">"
        << xml_escape(to_string(role)) << "</text>\n";
    lx += 110;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string labels_table(const LabelSummary& summary) {
  std::size_t width = 8;
  for (const auto& [rel, c] : summary.per_relation) width = std::max(width, rel.size());
  std::ostringstream out;
  auto row = [&](const std::string& name, const std::string& ck, const std::string& pk,
                 const std::string& nd, const std::string& total) {
    out << name << std::string(width - name.size() + 2, ' ');
    for (const auto* cell : {&ck, &pk, &nd, &total})
      out << std::string(cell->size() < 7 ? 7 - cell->size() : 1, ' ') << *cell;
    out << '\n';
  };
  row("relation", "CK", "PK", "ND", "total");
  auto counts = [&](const std::string& name, const LabelCounts& c) {
    row(name, std::to_string(c.ck), std::to_string(c.pk), std::to_string(c.nd),
        std::to_string(c.total()));
  };
  for (const auto& [rel, c] : summary.per_relation) counts(rel, c);
  counts("overall", summary.overall);
  return out.str();
}

std::string labels_csv(const LabelSummary& summary) {
  std::ostringstream out;
  out << "scope,name,CK,PK,ND\n";
  for (const auto& [g, c] : summary.per_group)
    out << "group," << g << ',' << c.ck << ',' << c.pk << ',' << c.nd << '\n';
  for (const auto& [r, c] : summary.per_relation)
    out << "relation," << r << ',' << c.ck << ',' << c.pk << ',' << c.nd << '\n';
  out << "overall,all," << summary.overall.ck << ',' << summary.overall.pk << ','
      << summary.overall.nd << '\n';
  return out.str();
}

std::string sweep_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "layer,module,role";
  for (auto s : report.seeds) out << ",P_seed" << s;
  out << ",mean,stddev\n";
  for (const auto& row : report.rows) {
    out << row.address.layer << ',' << to_string(row.address.module) << ','
        << to_string(row.address.role);
    for (double p : row.per_seed) out << ',' << fmt(p);
    out << ',' << fmt(row.mean) << ',' << fmt(row.stddev) << '\n';
  }
  return out.str();
}

}  // namespace cprobe
