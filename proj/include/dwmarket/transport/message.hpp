#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dwmarket/core.hpp"
#include "dwmarket/error.hpp"

namespace dwm {

inline constexpr int kWireVersion = 1;

struct Register {
  std::string device_id;
  std::size_t horizon = 0;
  friend bool operator==(const Register&, const Register&) = default;
};

struct PriceAnnounce {
  int iteration = 0;
  std::vector<double> prices;
  friend bool operator==(const PriceAnnounce&, const PriceAnnounce&) = default;
};

struct BidSubmit {
  int iteration = 0;
  std::string device_id;
  std::vector<double> demand;
  double benefit = 0.0;
  std::optional<BidTerms> terms;  // exact partial sums, sent by aggregators
  friend bool operator==(const BidSubmit&, const BidSubmit&) = default;
};

/// Final purchase for one participant. weights/rounds identify the master's
/// convex combination (rounds[i] is the iteration whose bid carries weights[i])
/// so that an aggregator can split its share among its children.
struct FinalAllocate {
  std::string device_id;
  std::vector<double> demand;
  std::vector<double> prices;
  std::vector<double> weights;
  std::vector<int> rounds;
  friend bool operator==(const FinalAllocate&, const FinalAllocate&) = default;
};

struct Shutdown {
  friend bool operator==(const Shutdown&, const Shutdown&) = default;
};

/// Sent by the coordinator when it refuses a registration.
struct Reject {
  std::string device_id;
  std::string reason;
  friend bool operator==(const Reject&, const Reject&) = default;
};

using Message = std::variant<Register, PriceAnnounce, BidSubmit, FinalAllocate, Shutdown, Reject>;

inline const char* message_type(const Message& m) {
  static constexpr const char* names[] = {"register", "price", "bid", "allocate", "shutdown", "reject"};
  return names[m.index()];
}

namespace detail {

inline std::vector<double> finite_array(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw ProtocolError(std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw ProtocolError(std::string("field '") + key + "' must contain only numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline double finite_number(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace detail

/// One JSON object, no trailing newline.
inline std::string encode(const Message& msg) {
  nlohmann::json j;
  j["v"] = kWireVersion;
  j["type"] = message_type(msg);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Register>) {
          j["device_id"] = m.device_id;
          j["horizon"] = m.horizon;
        } else if constexpr (std::is_same_v<T, PriceAnnounce>) {
          j["iteration"] = m.iteration;
          j["prices"] = m.prices;
        } else if constexpr (std::is_same_v<T, BidSubmit>) {
          j["iteration"] = m.iteration;
          j["device_id"] = m.device_id;
          j["demand"] = m.demand;
          j["benefit"] = m.benefit;
          if (m.terms) j["terms"] = {{"demand", m.terms->demand}, {"benefit", m.terms->benefit}};
        } else if constexpr (std::is_same_v<T, FinalAllocate>) {
          j["device_id"] = m.device_id;
          j["demand"] = m.demand;
          j["prices"] = m.prices;
          j["weights"] = m.weights;
          j["rounds"] = m.rounds;
        } else if constexpr (std::is_same_v<T, Reject>) {
          j["device_id"] = m.device_id;
          j["reason"] = m.reason;
        }
      },
      msg);
  try {
    return j.dump();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("cannot encode message: ") + e.what());
  }
}

/// Parses one wire line. Throws ProtocolError on anything malformed.
inline Message decode(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line.begin(), line.end());
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
  try {
    if (!j.is_object()) throw ProtocolError("message must be a JSON object");
    if (!j.contains("v") || j.at("v") != kWireVersion) throw ProtocolError("unsupported wire version");
    const std::string type = j.at("type").get<std::string>();
    if (type == "register") {
      return Register{j.at("device_id").get<std::string>(), j.at("horizon").get<std::size_t>()};
    }
    if (type == "price") {
      return PriceAnnounce{j.at("iteration").get<int>(), detail::finite_array(j, "prices")};
    }
    if (type == "bid") {
      BidSubmit b{j.at("iteration").get<int>(), j.at("device_id").get<std::string>(),
                  detail::finite_array(j, "demand"), detail::finite_number(j, "benefit"), std::nullopt};
      if (j.contains("terms")) {
        BidTerms t;
        t.demand = j.at("terms").at("demand").get<std::vector<std::vector<double>>>();
        t.benefit = j.at("terms").at("benefit").get<std::vector<double>>();
        b.terms = std::move(t);
      }
      return b;
    }
    if (type == "allocate") {
      FinalAllocate a{j.at("device_id").get<std::string>(), detail::finite_array(j, "demand"),
                      detail::finite_array(j, "prices"), {}, {}};
      if (j.contains("weights")) a.weights = detail::finite_array(j, "weights");
      if (j.contains("rounds")) a.rounds = j.at("rounds").get<std::vector<int>>();
      return a;
    }
    if (type == "shutdown") return Shutdown{};
    if (type == "reject") return Reject{j.at("device_id").get<std::string>(), j.at("reason").get<std::string>()};
    throw ProtocolError("unknown message type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
}

}  // namespace dwm
