#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dwmarket/coordinator.hpp"

namespace dwm {

/// 17 significant digits, so that parsing the text gives back the same double.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline const char* kIterationsHeader =
    "iter,objective,s_known,s_best,s_best_max,gap,generation_cost,user_payment,par_demand,par_price,std_demand,"
    "std_price,num_bids";

inline std::string iterations_csv(const DwResult& r) {
  std::ostringstream out;
  out << kIterationsHeader << "\n";
  for (const auto& rec : r.records) {
    const auto& m = rec.metrics;
    out << rec.iteration;
    for (double v : {rec.master.objective, rec.s_known, rec.s_best, rec.s_best_max, rec.gap, m.generation_cost,
                     m.user_payment, m.par_demand, m.par_price, m.std_demand, m.std_price}) {
      out << ',' << format_number(v);
    }
    out << ',' << rec.num_bids << "\n";
  }
  return out.str();
}

template <class U>
std::string vector_csv(const Hourly<U>& v) {
  std::ostringstream out;
  out << "hour,value\n";
  for (std::size_t h = 0; h < v.size(); ++h) out << h << ',' << format_number(v[h]) << "\n";
  return out.str();
}

inline std::string allocation_csv(const Allocation& a, std::size_t horizon) {
  std::ostringstream out;
  out << "device_id,benefit";
  for (std::size_t h = 0; h < horizon; ++h) out << ",h" << h;
  out << "\n";
  for (const auto& d : a.devices) {
    out << d.device_id << ',' << format_number(d.benefit);
    for (double x : d.demand) out << ',' << format_number(x);
    out << "\n";
  }
  return out.str();
}

namespace detail {

inline nlohmann::json finite_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

template <class U>
double par_or_nan(const Hourly<U>& v) {
  return v.size() > 0 && v.mean() > 0.0 ? par(v) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

inline nlohmann::json summary_json(const DwResult& r) {
  using detail::finite_or_null;
  const auto& D0 = r.initial_demand;
  const auto& D = r.final_master.constructed_demand;
  nlohmann::json j;
  j["status"] = to_string(r.status);
  j["iterations"] = r.records.size();
  j["gap_tol"] = finite_or_null(r.gap_tol);
  j["final_gap"] = r.records.empty() ? nlohmann::json() : finite_or_null(r.records.back().gap);
  j["objective_final"] = finite_or_null(r.final_master.objective);
  j["par_demand_initial"] = finite_or_null(detail::par_or_nan(D0));
  j["par_demand_final"] = finite_or_null(detail::par_or_nan(D));
  j["par_price_initial"] = finite_or_null(detail::par_or_nan(r.initial_prices));
  j["par_price_final"] = finite_or_null(detail::par_or_nan(r.final_master.prices));
  j["peak_demand_initial"] = D0.size() ? D0.max() : 0.0;
  j["peak_demand_final"] = D.size() ? D.max() : 0.0;
  if (!r.records.empty()) {
    j["generation_cost_initial"] = r.records.front().metrics.generation_cost;
    j["generation_cost_final"] = r.records.back().metrics.generation_cost;
    j["user_payment_initial"] = r.records.front().metrics.user_payment;
    j["user_payment_final"] = r.records.back().metrics.user_payment;
  }
  j["devices"] = r.allocation.devices.size();
  return j;
}

/// A plain line chart: one polyline per series, later series drawn darker.
inline std::string svg_chart(const std::string& title, const std::string& y_label,
                             const std::vector<std::vector<double>>& series) {
  constexpr double W = 720, Hgt = 420, left = 60, right = 20, top = 40, bottom = 50;
  double ymax = 0.0;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.size());
    for (double v : s) {
      if (std::isfinite(v)) ymax = std::max(ymax, v);
    }
  }
  if (ymax <= 0.0) ymax = 1.0;
  const double xspan = n > 1 ? static_cast<double>(n - 1) : 1.0;
  auto X = [&](std::size_t i) { return left + (W - left - right) * static_cast<double>(i) / xspan; };
  auto Y = [&](double v) { return top + (Hgt - top - bottom) * (1.0 - v / ymax); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hgt << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  out << "<path d=\"M" << left << ' ' << top << " V" << Hgt - bottom << " H" << W - right
      << "\" stroke=\"black\" fill=\"none\"/>\n";
  out << "<text x=\"" << left - 8 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
      << format_number(ymax).substr(0, 8) << "</text>\n";
  out << "<text x=\"" << left - 8 << "\" y=\"" << Hgt - bottom + 4 << "\" text-anchor=\"end\" font-size=\"11\">0</text>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << Hgt - 12 << "\" text-anchor=\"middle\" font-size=\"12\">hour</text>\n";
  out << "<text x=\"14\" y=\"" << Hgt / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << Hgt / 2
      << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double shade = series.size() > 1 ? 200.0 * (1.0 - static_cast<double>(s) / (series.size() - 1)) : 0.0;
    const int c = static_cast<int>(shade);
    out << "<path fill=\"none\" stroke=\"rgb(" << c << ',' << c << ",255)\" stroke-width=\""
        << (s + 1 == series.size() ? 2.5 : 1.0) << "\" d=\"";
    for (std::size_t i = 0; i < series[s].size(); ++i) {
      const double v = std::isfinite(series[s][i]) ? series[s][i] : 0.0;
      out << (i ? " L" : "M") << X(i) << ' ' << Y(v);
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

/// Writes the full run report into out_dir (created if needed).
inline void write_report(const DwResult& r, const std::filesystem::path& out_dir, std::size_t horizon,
                         bool svg = false) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "iterations.csv", iterations_csv(r));
  write_text(out_dir / "prices_initial.csv", vector_csv(r.initial_prices));
  write_text(out_dir / "prices_final.csv", vector_csv(r.final_master.prices));
  write_text(out_dir / "demand_initial.csv", vector_csv(r.initial_demand));
  write_text(out_dir / "demand_final.csv", vector_csv(r.final_master.constructed_demand));
  write_text(out_dir / "allocation.csv", allocation_csv(r.allocation, horizon));
  write_text(out_dir / "summary.json", summary_json(r).dump(2) + "\n");
  if (svg) {
    std::vector<std::vector<double>> prices, demand;
    for (const auto& rec : r.records) {
      prices.push_back(rec.prices.raw());
      demand.push_back(rec.master.constructed_demand.raw());
    }
    write_text(out_dir / "prices.svg", svg_chart("Announced prices by iteration", "$/kWh", prices));
    write_text(out_dir / "demand.svg", svg_chart("Constructed demand by iteration", "kWh", demand));
  }
}

}  // namespace dwm
