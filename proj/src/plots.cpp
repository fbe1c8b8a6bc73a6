// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "transtee/errors.hpp"
#include "transtee/transtee_model.hpp"

namespace transtee {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed while writing " + path.string());
}

double parse_number(const std::string& field, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != field.size()) throw ParseError("not a number: '" + field + "'", line);
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

constexpr double kWidth = 640.0, kHeight = 400.0, kMargin = 48.0;

}  // namespace

std::vector<double> treatment_grid(double low, double high, std::size_t points) {
  if (points < 2) throw ContractError("treatment grid needs at least 2 points");
  if (!(low < high)) throw ContractError("treatment grid needs low < high");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) {
    g[k] = low + (high - low) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  g.back() = high;
  return g;
}

AdrfCurve compute_adrf(const ResponseFunction& model, const Dataset& data,
                       std::size_t x_sample_count, std::span<const double> t_grid) {
  if (t_grid.empty()) throw ContractError("ADRF needs a treatment grid");
  const std::size_t m = std::min(x_sample_count, data.size());
  if (m == 0) throw ContractError("ADRF needs at least one covariate row");
  std::vector<std::size_t> rows(m);
  for (std::size_t i = 0; i < m; ++i) rows[i] = i;
  const Tensor x = data.subset(rows).x;
  AdrfCurve curve;
  curve.t.assign(t_grid.begin(), t_grid.end());
  std::vector<double> column(m);
  auto average = [&](const ResponseFunction& f, double t) {
    std::fill(column.begin(), column.end(), t);
    const std::vector<double> y = f.evaluate(x, column, {});
    double total = 0.0;
    for (double v : y) total += v;
    return total / static_cast<double>(m);
  };
  for (double t : t_grid) {
    curve.estimate.push_back(average(model, t));
    if (data.oracle) curve.truth.push_back(average(*data.oracle, t));
  }
  return curve;
}

AdrfCurve plot_adrf(const ResponseFunction& model, const Dataset& data,
                    std::size_t x_sample_count, std::span<const double> t_grid,
                    const std::filesystem::path& out_path) {
  if (!data.oracle) throw ContractError("plot_adrf needs a dataset with an oracle");
  AdrfCurve curve = compute_adrf(model, data, x_sample_count, t_grid);
  std::ofstream out = open_out(out_path);
  curve.write_svg(out);
  finish(out, out_path);
  return curve;
}

void AdrfCurve::write_csv(std::ostream& out) const {
  out << "t,truth,estimate\n";
  for (std::size_t k = 0; k < t.size(); ++k) {
    out << num(t[k]) << ',' << (truth.empty() ? "" : num(truth[k])) << ',' << num(estimate[k])
        << '\n';
  }
}

AdrfCurve AdrfCurve::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty ADRF file");
  if (line != "t,truth,estimate") throw SchemaError("unexpected ADRF header: " + line);
  AdrfCurve c;
  bool any_truth = false, missing_truth = false;
  for (std::size_t number = 2; std::getline(in, line); ++number) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line);
    if (f.size() != 3) throw ParseError("expected 3 fields", number);
    c.t.push_back(parse_number(f[0], number));
    if (f[1].empty()) {
      missing_truth = true;
    } else {
      any_truth = true;
      c.truth.push_back(parse_number(f[1], number));
    }
    c.estimate.push_back(parse_number(f[2], number));
  }
  if (any_truth && missing_truth) throw SchemaError("truth column is only partly filled");
  if (c.t.empty()) throw SchemaError("ADRF file has no rows");
  return c;
}

void AdrfCurve::write_svg(std::ostream& out) const {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* series : {&truth, &estimate})
    for (double v : *series) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double t0 = t.front(), t1 = t.back() > t.front() ? t.back() : t.front() + 1.0;
  auto sx = [&](double v) { return kMargin + (v - t0) / (t1 - t0) * (kWidth - 2 * kMargin); };
  auto sy = [&](double v) {
    return kHeight - kMargin - (v - lo) / (hi - lo) * (kHeight - 2 * kMargin);
  };
  auto points = [&](const std::vector<double>& ys) {
    std::string s;
    for (std::size_t k = 0; k < ys.size(); ++k) {
      if (k) s += ' ';
      s += px(sx(t[k])) + ',' + px(sy(ys[k]));
    }
    return s;
  };
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
      << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "  <line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\""
      << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
      << "  <line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
      << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
      << "  <text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">t in [" << px(t0) << ", " << px(t1)
      << "]</text>\n"
      << "  <text x=\"8\" y=\"" << kMargin - 16 << "\" font-size=\"12\">mu(t) in [" << px(lo)
      << ", " << px(hi) << "]</text>\n";
  if (!truth.empty()) {
    out << "  <polyline class=\"truth\" fill=\"none\" stroke=\"black\" stroke-width=\"2\" points=\""
        << points(truth) << "\"/>\n";
  }
  out << "  <polyline class=\"estimate\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" "
         "stroke-dasharray=\"6,3\" points=\""
      << points(estimate) << "\"/>\n"
      << "</svg>\n";
}

std::size_t count_flat_segments(std::span<const double> values, double tol) {
  std::size_t segments = 0;
  std::size_t k = 0;
  while (k < values.size()) {
    std::size_t end = k + 1;
    while (end < values.size() && std::abs(values[end] - values[k]) <= tol) ++end;
    if (end - k >= 2) ++segments;
    k = end;
  }
  return segments;
}

AttentionExport export_attention(std::span<const Tensor> cross_weights,
                                 const std::optional<CovariateGroups>& groups,
                                 const std::filesystem::path& out_dir, const std::string& stem) {
  if (cross_weights.empty()) throw ContractError("no cross-attention weights to export");
  const std::size_t p = cross_weights.front().shape().back();
  AttentionExport e;
  if (groups && groups->is_partition(p)) {
    const AttentionSummary s = attention_summary(cross_weights, *groups);
    e.per_covariate = s.per_covariate;
    e.group_names = groups->names;
    e.group_sums = s.group_sums;
  } else {
    CovariateGroups all;
    all.names = {"all"};
    all.members.resize(1);
    for (std::size_t j = 0; j < p; ++j) all.members[0].push_back(j);
    e.per_covariate = attention_summary(cross_weights, all).per_covariate;
  }
  const std::filesystem::path csv = out_dir / (stem + ".csv");
  const std::filesystem::path svg = out_dir / (stem + ".svg");
  std::ofstream c = open_out(csv);
  e.write_csv(c);
  finish(c, csv);
  std::ofstream s = open_out(svg);
  e.write_svg(s);
  finish(s, svg);
  return e;
}

void AttentionExport::write_csv(std::ostream& out) const {
  out << "kind,name,weight\n";
  for (std::size_t j = 0; j < per_covariate.size(); ++j) {
    out << "covariate,x" << j + 1 << ',' << num(per_covariate[j]) << '\n';
  }
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    out << "group," << group_names[g] << ',' << num(group_sums[g]) << '\n';
  }
}

AttentionExport AttentionExport::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "kind,name,weight") {
    throw SchemaError("attention file must start with kind,name,weight");
  }
  AttentionExport e;
  for (std::size_t number = 2; std::getline(in, line); ++number) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line);
    if (f.size() != 3) throw ParseError("expected 3 fields", number);
    const double w = parse_number(f[2], number);
    if (f[0] == "covariate") {
      e.per_covariate.push_back(w);
    } else if (f[0] == "group") {
      e.group_names.push_back(f[1]);
      e.group_sums.push_back(w);
    } else {
      throw ParseError("unknown row kind '" + f[0] + "'", number);
    }
  }
  if (e.per_covariate.empty()) throw SchemaError("attention file has no covariate rows");
  return e;
}

void AttentionExport::write_svg(std::ostream& out) const {
  const double cell = 24.0;
  const std::size_t p = per_covariate.size();
  double top = 0.0;
  for (double w : per_covariate) top = std::max(top, w);
  auto shade = [&](double w) {
    // Darker cells carry more weight; all cells share one shade when weights tie.
    const int level = top > 0.0 ? static_cast<int>(std::lround(255.0 * (1.0 - w / top) * 0.85)) : 255;
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02xff", level, level);
    return std::string(buf);
  };
  const double width = 80.0 + cell * static_cast<double>(p);
  const double height = 60.0 + 20.0 * static_cast<double>(group_names.size());
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "  <text x=\"4\" y=\"28\" font-size=\"12\">weight</text>\n";
  for (std::size_t j = 0; j < p; ++j) {
    out << "  <rect class=\"cell\" x=\"" << 60.0 + cell * static_cast<double>(j)
        << "\" y=\"12\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
        << shade(per_covariate[j]) << "\"><title>x" << j + 1 << ' ' << px(per_covariate[j])
        << "</title></rect>\n";
  }
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    out << "  <text x=\"4\" y=\"" << 56.0 + 20.0 * static_cast<double>(g)
        << "\" font-size=\"12\">" << group_names[g] << ": " << px(group_sums[g]) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace transtee
