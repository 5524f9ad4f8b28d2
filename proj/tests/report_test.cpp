#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dwmarket/report.hpp"

using namespace dwm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dwm_report_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

DwResult sample_run(int iters = 5) {
  const auto cfg = generate_scenario(3, 11);
  DwSettings s = DwSettings::from(cfg);
  s.max_iters = iters;
  return run_dw(cfg, s);
}

}  // namespace

TEST(FormatNumber, RoundTrips) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20000; ++i) {
    std::uint64_t bits = rng();
    double x;
    std::memcpy(&x, &bits, sizeof x);
    if (!std::isfinite(x)) continue;
    EXPECT_EQ(std::strtod(format_number(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(std::nan("")), "nan");
  EXPECT_EQ(format_number(-INFINITY), "-inf");
}

TEST(Csv, IterationsShape) {
  const auto r = sample_run();
  const auto rows = lines(iterations_csv(r));
  ASSERT_EQ(rows.size(), r.records.size() + 1);
  EXPECT_EQ(rows[0], kIterationsHeader);
  const std::size_t cols = split(rows[0]).size();
  EXPECT_EQ(cols, 13u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split(rows[i]);
    ASSERT_EQ(cells.size(), cols);
    EXPECT_EQ(std::stoi(cells[0]), r.records[i - 1].iteration);
    EXPECT_EQ(std::strtod(cells[1].c_str(), nullptr), r.records[i - 1].master.objective);
  }
}

TEST(Csv, VectorAndAllocationShape) {
  const auto r = sample_run();
  const auto prices = lines(vector_csv(r.final_master.prices));
  ASSERT_EQ(prices.size(), 25u);
  EXPECT_EQ(prices[0], "hour,value");
  EXPECT_EQ(prices[24].substr(0, 3), "23,");
  const auto alloc = lines(allocation_csv(r.allocation, 24));
  ASSERT_EQ(alloc.size(), r.allocation.devices.size() + 1);
  EXPECT_EQ(split(alloc[0]).size(), 26u);
  EXPECT_EQ(split(alloc[0])[2], "h0");
  for (std::size_t i = 1; i < alloc.size(); ++i) {
    EXPECT_EQ(split(alloc[i])[0], r.allocation.devices[i - 1].device_id);
  }
}

TEST(Summary, MatchesWrittenFiles) {
  const auto r = sample_run();
  const auto dir = scratch("summary");
  write_report(r, dir, 24);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  DemandVector d(24);
  const auto rows = lines(slurp(dir / "demand_final.csv"));
  for (std::size_t h = 0; h < 24; ++h) d[h] = std::strtod(split(rows[h + 1])[1].c_str(), nullptr);
  EXPECT_DOUBLE_EQ(summary["par_demand_final"].get<double>(), par(d));
  EXPECT_EQ(summary["iterations"].get<std::size_t>(), r.records.size());
  EXPECT_EQ(summary["status"].get<std::string>(), to_string(r.status));
  EXPECT_EQ(summary["devices"].get<std::size_t>(), r.allocation.devices.size());
  for (const char* f : {"iterations.csv", "prices_initial.csv", "prices_final.csv", "demand_initial.csv",
                        "demand_final.csv", "allocation.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir / "prices.svg"));
  fs::remove_all(dir);
}

TEST(Summary, EmptyMarketUsesNulls) {
  ScenarioConfig cfg;
  const auto r = run_dw(cfg);
  const auto j = summary_json(r);
  EXPECT_TRUE(j["par_demand_final"].is_null());
  EXPECT_TRUE(j["par_price_initial"].is_null());
  EXPECT_EQ(j["peak_demand_final"].get<double>(), 0.0);
  EXPECT_NO_THROW(nlohmann::json::parse(j.dump()));
}

TEST(Svg, WellFormedCharts) {
  const auto r = sample_run(3);
  const auto dir = scratch("svg");
  write_report(r, dir, 24, true);
  for (const char* f : {"prices.svg", "demand.svg"}) {
    const auto text = slurp(dir / f);
    EXPECT_EQ(text.rfind("<svg", 0), 0u) << f;
    EXPECT_NE(text.find("</svg>"), std::string::npos);
    std::size_t paths = 0;
    for (std::size_t pos = 0; (pos = text.find("<path fill=\"none\"", pos)) != std::string::npos; ++pos) ++paths;
    EXPECT_EQ(paths, r.records.size());
  }
  fs::remove_all(dir);
}

TEST(Report, Deterministic) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  write_report(sample_run(), a, 24, true);
  write_report(sample_run(), b, 24, true);
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
  }
  fs::remove_all(a);
  fs::remove_all(b);
}
