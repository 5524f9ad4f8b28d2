#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dwmarket/core.hpp"
#include "dwmarket/devices.hpp"
#include "dwmarket/supply.hpp"

namespace dwm {

struct DeviceConfig {
  std::string id;
  DeviceSpec spec;

  friend bool operator==(const DeviceConfig&, const DeviceConfig&) = default;
};

struct Household {
  std::string id;
  std::vector<DeviceConfig> devices;

  friend bool operator==(const Household&, const Household&) = default;
};

enum class InitialPriceKind { FlatAverage, Zero, Explicit };

struct InitialPriceRule {
  InitialPriceKind kind = InitialPriceKind::FlatAverage;
  std::vector<double> prices;  // Explicit only

  friend bool operator==(const InitialPriceRule&, const InitialPriceRule&) = default;
};

struct DwConfig {
  int max_iters = 24;
  std::optional<double> gap_tol;  // empty: 1e-6 (1 + C(D_0))
  InitialPriceRule initial_prices;

  friend bool operator==(const DwConfig&, const DwConfig&) = default;
};

struct ScenarioConfig {
  std::size_t horizon = kDefaultHorizon;
  SupplyModel supply;
  std::vector<Household> households;
  DwConfig dw;
  std::uint64_t seed = 0;

  /// All devices, ordered by ascending id.
  std::vector<DeviceConfig> devices() const {
    std::vector<DeviceConfig> out;
    for (const auto& hh : households) out.insert(out.end(), hh.devices.begin(), hh.devices.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

  friend bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
    return a.horizon == b.horizon && a.supply.a == b.supply.a && a.households == b.households &&
           a.dw == b.dw && a.seed == b.seed;
  }
};

namespace detail {

using json = nlohmann::json;

/// Collects violations while reading a JSON document into typed values.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  /// Adds spec violations ("field: problem") under the device's locator.
  void check(const std::vector<std::string>& violations, const std::string& path) {
    for (const auto& v : violations) {
      const auto colon = v.find(':');
      fail(path + "." + v.substr(0, colon), v.substr(colon + 2));
    }
  }

  void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
        fail(path + "." + it.key(), "unknown field");
      }
    }
  }

  std::optional<double> number(const json& obj, const std::string& path, const char* key, bool required,
                               std::optional<double> fallback = std::nullopt) {
    const std::string p = path + "." + key;
    if (!obj.contains(key) || obj.at(key).is_null()) {
      if (required && !fallback) fail(p, "required number missing");
      return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number()) {
      fail(p, "expected a number");
      return std::nullopt;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      fail(p, "must be finite");
      return std::nullopt;
    }
    return x;
  }

  std::optional<std::int64_t> integer(const json& obj, const std::string& path, const char* key,
                                      std::optional<std::int64_t> fallback) {
    const std::string p = path + "." + key;
    if (!obj.contains(key) || obj.at(key).is_null()) {
      if (!fallback) fail(p, "required integer missing");
      return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer()) {
      fail(p, "expected an integer");
      return std::nullopt;
    }
    return v.get<std::int64_t>();
  }

  std::optional<std::string> string(const json& obj, const std::string& path, const char* key) {
    const std::string p = path + "." + key;
    if (!obj.contains(key)) {
      fail(p, "required string missing");
      return std::nullopt;
    }
    if (!obj.at(key).is_string()) {
      fail(p, "expected a string");
      return std::nullopt;
    }
    auto s = obj.at(key).get<std::string>();
    if (s.empty()) {
      fail(p, "must not be empty");
      return std::nullopt;
    }
    return s;
  }

  /// An hourly series given either as an array of `horizon` numbers or as one number.
  std::optional<std::vector<double>> series(const json& obj, const std::string& path, const char* key,
                                            std::size_t horizon, std::optional<double> fallback) {
    const std::string p = path + "." + key;
    if (!obj.contains(key) || obj.at(key).is_null()) {
      if (!fallback) {
        fail(p, "required hourly series missing");
        return std::nullopt;
      }
      return std::vector<double>(horizon, *fallback);
    }
    const json& v = obj.at(key);
    if (v.is_number()) {
      const double x = v.get<double>();
      if (!std::isfinite(x)) {
        fail(p, "must be finite");
        return std::nullopt;
      }
      return std::vector<double>(horizon, x);
    }
    if (!v.is_array()) {
      fail(p, "expected an array of numbers or a number");
      return std::nullopt;
    }
    if (v.size() != horizon) {
      fail(p, "length " + std::to_string(v.size()) + " != horizon " + std::to_string(horizon));
      return std::nullopt;
    }
    std::vector<double> out;
    bool ok = true;
    for (std::size_t h = 0; h < v.size(); ++h) {
      if (!v[h].is_number() || !std::isfinite(v[h].get<double>())) {
        fail(p + "[" + std::to_string(h) + "]", "expected a finite number");
        ok = false;
        continue;
      }
      out.push_back(v[h].get<double>());
    }
    if (!ok) return std::nullopt;
    return out;
  }
};

inline std::optional<DeviceSpec> read_device(Reader& r, const json& dev, const std::string& path,
                                             std::size_t horizon) {
  const auto type = r.string(dev, path, "type");
  if (!type) return std::nullopt;
  if (*type == "ev") {
    r.reject_unknown(dev, path, {"id", "type", "e_max", "e_des"});
    auto e_max = r.series(dev, path, "e_max", horizon, std::nullopt);
    auto e_des = r.number(dev, path, "e_des", true);
    if (!e_max || !e_des) {
      // Still check whatever did parse.
      if (e_max) r.check(check_spec(EvSpec{DemandVector(std::move(*e_max)), 0.0}, horizon), path);
      if (e_des && *e_des < 0.0) r.fail(path + ".e_des", "must be finite and >= 0");
      return std::nullopt;
    }
    EvSpec spec{DemandVector(std::move(*e_max)), *e_des};
    r.check(check_spec(spec, horizon), path);
    return spec;
  }
  if (*type == "ewh") {
    r.reject_unknown(dev, path,
                     {"id", "type", "c_tank", "r_loss", "e_max", "t_min", "t_in", "t_amb", "draw", "p_short", "t0"});
    const EwhSpec defaults;
    auto c_tank = r.number(dev, path, "c_tank", false, defaults.c_tank);
    auto r_loss = r.number(dev, path, "r_loss", false, defaults.r_loss);
    auto e_max = r.number(dev, path, "e_max", false, defaults.e_max);
    auto t_min = r.number(dev, path, "t_min", false, defaults.t_min);
    auto p_short = r.number(dev, path, "p_short", false, defaults.p_short);
    auto t_in = r.series(dev, path, "t_in", horizon, 15.0);
    auto t_amb = r.series(dev, path, "t_amb", horizon, 20.0);
    auto draw = r.series(dev, path, "draw", horizon, std::nullopt);
    std::optional<double> t0 = t_min ? r.number(dev, path, "t0", false, *t_min) : std::nullopt;
    const bool complete = c_tank && r_loss && e_max && t_min && p_short && t_in && t_amb && draw && t0;
    // Fields that failed to parse are replaced by valid stand-ins so the rest still gets checked.
    EwhSpec spec{c_tank.value_or(defaults.c_tank),
                 r_loss.value_or(defaults.r_loss),
                 e_max.value_or(defaults.e_max),
                 t_min.value_or(defaults.t_min),
                 TemperatureVector(t_in ? std::move(*t_in) : std::vector<double>(horizon, -1e300)),
                 TemperatureVector(t_amb ? std::move(*t_amb) : std::vector<double>(horizon, 0.0)),
                 DemandVector(draw ? std::move(*draw) : std::vector<double>(horizon, 0.0)),
                 p_short.value_or(defaults.p_short),
                 t0.value_or(defaults.t0)};
    if (!t_min) {
      for (auto& t : spec.t_in) t = std::min(t, spec.t_min - 1.0);
    }
    r.check(check_spec(spec, horizon), path);
    if (!complete) return std::nullopt;
    return spec;
  }
  r.fail(path + ".type", "unknown device type '" + *type + "' (expected \"ev\" or \"ewh\")");
  return std::nullopt;
}

}  // namespace detail

/// Parses and validates a scenario document. Throws ValidationError listing
/// every violation (parse failures included) with a path-like locator.
inline ScenarioConfig parse_scenario(std::string_view text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ValidationError({std::string("$: parse error: ") + e.what()});
  }
  detail::Reader r;
  ScenarioConfig cfg;
  if (!doc.is_object()) throw ValidationError({"$: expected a JSON object"});
  r.reject_unknown(doc, "$", {"horizon", "supply", "households", "dw", "seed"});

  const auto horizon = r.integer(doc, "$", "horizon", static_cast<std::int64_t>(kDefaultHorizon));
  if (horizon && (*horizon < 1 || *horizon > 8760)) {
    r.fail("$.horizon", "must be between 1 and 8760");
  } else if (horizon) {
    cfg.horizon = static_cast<std::size_t>(*horizon);
  }

  if (doc.contains("supply")) {
    const json& s = doc.at("supply");
    if (!s.is_object()) {
      r.fail("$.supply", "expected an object");
    } else {
      r.reject_unknown(s, "$.supply", {"a"});
      if (auto a = r.number(s, "$.supply", "a", false, SupplyModel{}.a)) {
        if (!(*a > 0.0)) r.fail("$.supply.a", "must be > 0");
        cfg.supply.a = *a;
      }
    }
  }

  if (doc.contains("seed")) {
    const json& s = doc.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      r.fail("$.seed", "expected a nonnegative integer");
    } else {
      cfg.seed = s.get<std::uint64_t>();
    }
  }

  if (doc.contains("dw")) {
    const json& d = doc.at("dw");
    if (!d.is_object()) {
      r.fail("$.dw", "expected an object");
    } else {
      r.reject_unknown(d, "$.dw", {"max_iters", "gap_tol", "initial_prices"});
      if (auto it = r.integer(d, "$.dw", "max_iters", 24)) {
        if (*it < 1 || *it > 100000) {
          r.fail("$.dw.max_iters", "must be between 1 and 100000");
        } else {
          cfg.dw.max_iters = static_cast<int>(*it);
        }
      }
      if (d.contains("gap_tol") && !d.at("gap_tol").is_null()) {
        if (auto g = r.number(d, "$.dw", "gap_tol", true)) {
          if (*g < 0.0) r.fail("$.dw.gap_tol", "must be >= 0");
          cfg.dw.gap_tol = *g;
        }
      }
      if (d.contains("initial_prices")) {
        const json& ip = d.at("initial_prices");
        if (ip.is_string() && ip.get<std::string>() == "flat-average") {
          cfg.dw.initial_prices = {InitialPriceKind::FlatAverage, {}};
        } else if (ip.is_string() && ip.get<std::string>() == "zero") {
          cfg.dw.initial_prices = {InitialPriceKind::Zero, {}};
        } else if (ip.is_array()) {
          if (auto v = r.series(d, "$.dw", "initial_prices", cfg.horizon, std::nullopt)) {
            cfg.dw.initial_prices = {InitialPriceKind::Explicit, std::move(*v)};
          }
        } else {
          r.fail("$.dw.initial_prices", "expected \"flat-average\", \"zero\" or an array of prices");
        }
      }
    }
  }

  std::map<std::string, std::string> device_paths;
  std::map<std::string, std::string> household_paths;
  if (doc.contains("households")) {
    const json& hs = doc.at("households");
    if (!hs.is_array()) {
      r.fail("$.households", "expected an array");
    } else {
      for (std::size_t i = 0; i < hs.size(); ++i) {
        const std::string hp = "households[" + std::to_string(i) + "]";
        const json& hj = hs[i];
        if (!hj.is_object()) {
          r.fail(hp, "expected an object");
          continue;
        }
        r.reject_unknown(hj, hp, {"id", "devices"});
        Household hh;
        if (auto id = r.string(hj, hp, "id")) {
          hh.id = *id;
          if (auto [it, fresh] = household_paths.emplace(*id, hp + ".id"); !fresh) {
            r.fail(hp + ".id", "duplicate household id '" + *id + "' (also at " + it->second + ")");
          }
        }
        if (!hj.contains("devices") || !hj.at("devices").is_array()) {
          r.fail(hp + ".devices", "expected an array");
        } else {
          const json& ds = hj.at("devices");
          for (std::size_t k = 0; k < ds.size(); ++k) {
            const std::string dp = hp + ".devices[" + std::to_string(k) + "]";
            if (!ds[k].is_object()) {
              r.fail(dp, "expected an object");
              continue;
            }
            auto id = r.string(ds[k], dp, "id");
            if (id) {
              if (auto [it, fresh] = device_paths.emplace(*id, dp + ".id"); !fresh) {
                r.fail(dp + ".id", "duplicate device id '" + *id + "' (also at " + it->second + ")");
              }
            }
            auto spec = detail::read_device(r, ds[k], dp, cfg.horizon);
            if (id && spec) hh.devices.push_back({*id, std::move(*spec)});
          }
        }
        cfg.households.push_back(std::move(hh));
      }
    }
  }

  if (!r.errors.empty()) throw ValidationError(std::move(r.errors));
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError({"$: cannot open scenario file '" + path + "'"});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

inline nlohmann::json device_to_json(const DeviceConfig& dev) {
  nlohmann::json j;
  j["id"] = dev.id;
  std::visit(
      [&](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, EvSpec>) {
          j["type"] = "ev";
          j["e_max"] = s.e_max.raw();
          j["e_des"] = s.e_des;
        } else {
          j["type"] = "ewh";
          j["c_tank"] = s.c_tank;
          j["r_loss"] = s.r_loss;
          j["e_max"] = s.e_max;
          j["t_min"] = s.t_min;
          j["t_in"] = s.t_in.raw();
          j["t_amb"] = s.t_amb.raw();
          j["draw"] = s.draw.raw();
          j["p_short"] = s.p_short;
          j["t0"] = s.t0;
        }
      },
      dev.spec);
  return j;
}

inline nlohmann::json to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["horizon"] = cfg.horizon;
  j["supply"] = {{"a", cfg.supply.a}};
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& hh : cfg.households) {
    nlohmann::json devs = nlohmann::json::array();
    for (const auto& d : hh.devices) devs.push_back(device_to_json(d));
    hs.push_back({{"id", hh.id}, {"devices", devs}});
  }
  j["households"] = hs;
  nlohmann::json dw;
  dw["max_iters"] = cfg.dw.max_iters;
  dw["gap_tol"] = cfg.dw.gap_tol ? nlohmann::json(*cfg.dw.gap_tol) : nlohmann::json(nullptr);
  switch (cfg.dw.initial_prices.kind) {
    case InitialPriceKind::FlatAverage: dw["initial_prices"] = "flat-average"; break;
    case InitialPriceKind::Zero: dw["initial_prices"] = "zero"; break;
    case InitialPriceKind::Explicit: dw["initial_prices"] = cfg.dw.initial_prices.prices; break;
  }
  j["dw"] = dw;
  j["seed"] = cfg.seed;
  return j;
}

inline std::string serialize_scenario(const ScenarioConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

/// A single-device document for standalone agents: {"horizon": H, "device": {...}}.
inline std::string serialize_device(const DeviceConfig& dev, std::size_t horizon) {
  nlohmann::json j{{"horizon", horizon}, {"device", device_to_json(dev)}};
  return j.dump(2) + "\n";
}

inline std::pair<DeviceConfig, std::size_t> parse_device(std::string_view text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ValidationError({std::string("$: parse error: ") + e.what()});
  }
  if (!doc.is_object()) throw ValidationError({"$: expected a JSON object"});
  detail::Reader r;
  r.reject_unknown(doc, "$", {"horizon", "device"});
  std::size_t horizon = kDefaultHorizon;
  if (auto h = r.integer(doc, "$", "horizon", static_cast<std::int64_t>(kDefaultHorizon))) {
    if (*h < 1) {
      r.fail("$.horizon", "must be >= 1");
    } else {
      horizon = static_cast<std::size_t>(*h);
    }
  }
  std::optional<DeviceConfig> dev;
  if (!doc.contains("device") || !doc.at("device").is_object()) {
    r.fail("$.device", "expected an object");
  } else {
    auto id = r.string(doc.at("device"), "$.device", "id");
    auto spec = detail::read_device(r, doc.at("device"), "$.device", horizon);
    if (id && spec) dev = DeviceConfig{*id, std::move(*spec)};
  }
  if (!r.errors.empty() || !dev) throw ValidationError(std::move(r.errors));
  return {std::move(*dev), horizon};
}

/// Randomized households shaped like a small residential feeder: each home has
/// one EV parked from evening to morning and one water heater with morning and
/// evening draw peaks. Parameter values are typical residential figures.
inline ScenarioConfig generate_scenario(int households, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.horizon = kDefaultHorizon;
  cfg.seed = seed;
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto round_to = [](double x, double step) { return std::round(x / step) * step; };
  const std::size_t H = cfg.horizon;

  for (int i = 0; i < households; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "h%02d", i + 1);
    Household hh{name, {}};

    const int arrival = uniform_int(17, 20);
    const int departure = uniform_int(6, 8);
    DemandVector e_max(H);
    for (std::size_t h = 0; h < H; ++h) {
      const int hour = static_cast<int>(h);
      if (hour >= arrival || hour < departure) e_max[h] = 7.0;
    }
    const double e_des = round_to(uniform(8.0, 16.0), 0.1);
    hh.devices.push_back({hh.id + "-ev", EvSpec{e_max, e_des}});

    EwhSpec ewh;
    ewh.t_in = TemperatureVector(H, 15.0);
    ewh.t_amb = TemperatureVector(H, 20.0);
    ewh.draw = DemandVector(H);
    const double total = uniform(6.0, 10.0);
    const double morning_share = uniform(0.35, 0.55);
    const int morning = uniform_int(6, 8);
    const int evening = uniform_int(18, 21);
    auto place = [&](int start, double energy) {
      ewh.draw[static_cast<std::size_t>(start)] += round_to(0.6 * energy, 0.01);
      ewh.draw[static_cast<std::size_t>(start + 1)] += round_to(0.4 * energy, 0.01);
    };
    place(morning, total * morning_share);
    place(evening, total * (1.0 - morning_share));
    ewh.t0 = ewh.t_min;
    hh.devices.push_back({hh.id + "-ewh", std::move(ewh)});
    cfg.households.push_back(std::move(hh));
  }
  return cfg;
}

}  // namespace dwm
