#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dwmarket/core.hpp"
#include "dwmarket/transport/agent.hpp"
#include "dwmarket/transport/channel.hpp"
#include "dwmarket/transport/message.hpp"

namespace dwm {

struct DeviceBid {
  std::string device_id;
  Bid bid;
  std::optional<BidTerms> terms;
};

/// Coordinator-side view of the participants: a strictly ordered round API.
class DeviceNetwork {
 public:
  virtual ~DeviceNetwork() = default;

  /// Registered participant ids, ascending.
  virtual std::vector<std::string> participants() const = 0;
  virtual std::size_t horizon() const = 0;

  /// Sends one PriceAnnounce to every participant; returns how many were delivered.
  virtual std::size_t broadcast_prices(int iteration, const PriceVector& prices) = 0;

  /// Exactly one bid per expected id, ascending by id.
  virtual std::vector<DeviceBid> collect_bids(int iteration, std::span<const std::string> expected,
                                              std::chrono::milliseconds timeout) = 0;

  virtual void allocate(const FinalAllocate& allocation) = 0;
  virtual void shutdown() = 0;
};

inline DeviceBid to_device_bid(const BidSubmit& b) {
  return DeviceBid{b.device_id, Bid{DemandVector(b.demand), b.benefit}, b.terms};
}

/// Calls agents directly on the coordinator's thread. No serialization.
class LocalNetwork : public DeviceNetwork {
 public:
  LocalNetwork(std::size_t horizon, std::vector<std::unique_ptr<Agent>> agents) : horizon_(horizon) {
    for (auto& a : agents) {
      const std::string id = a->id();
      if (a->horizon() != horizon_) throw ProtocolError("agent '" + id + "' has a different horizon", {id});
      if (!agents_.emplace(id, std::move(a)).second) throw ProtocolError("duplicate agent id '" + id + "'", {id});
    }
  }

  static std::unique_ptr<LocalNetwork> from_scenario(const ScenarioConfig& cfg) {
    std::vector<std::unique_ptr<Agent>> agents;
    for (auto& d : cfg.devices()) agents.push_back(std::make_unique<DeviceAgent>(d, cfg.horizon));
    return std::make_unique<LocalNetwork>(cfg.horizon, std::move(agents));
  }

  std::vector<std::string> participants() const override {
    std::vector<std::string> ids;
    for (const auto& [id, _] : agents_) ids.push_back(id);
    return ids;
  }
  std::size_t horizon() const override { return horizon_; }

  std::size_t broadcast_prices(int iteration, const PriceVector& prices) override {
    pending_.clear();
    const PriceAnnounce announce{iteration, prices.raw()};
    for (auto& [id, agent] : agents_) pending_.insert_or_assign(id, agent->respond(announce));
    return agents_.size();
  }

  std::vector<DeviceBid> collect_bids(int iteration, std::span<const std::string> expected,
                                      std::chrono::milliseconds) override {
    std::vector<DeviceBid> out;
    std::vector<std::string> missing;
    for (const auto& id : expected) {
      auto it = pending_.find(id);
      if (it == pending_.end() || it->second.iteration != iteration) {
        missing.push_back(id);
        continue;
      }
      out.push_back(to_device_bid(it->second));
    }
    if (!missing.empty()) throw ProtocolError("no bid from " + join_ids(missing), missing);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.device_id < b.device_id; });
    return out;
  }

  void allocate(const FinalAllocate& a) override {
    auto it = agents_.find(a.device_id);
    if (it == agents_.end()) throw ProtocolError("allocation for unknown participant '" + a.device_id + "'");
    it->second->allocate(a);
  }

  void shutdown() override {
    for (auto& [_, agent] : agents_) agent->shutdown();
  }

  Agent& agent(const std::string& id) { return *agents_.at(id); }

  static std::string join_ids(const std::vector<std::string>& ids) {
    std::string s;
    for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
    return s;
  }

 private:
  std::size_t horizon_;
  std::map<std::string, std::unique_ptr<Agent>> agents_;
  std::map<std::string, BidSubmit> pending_;
};

/// Coordinator-side connection to one agent.
class CoordinatorLink {
 public:
  virtual ~CoordinatorLink() = default;
  virtual void send(const Message& msg) = 0;
  virtual void close() = 0;
};

/// Shared round logic for message-passing transports. Concrete transports own
/// the links and feed every received message (tagged with its connection
/// number) into inbox_.
class MessageHub : public DeviceNetwork {
 public:
  struct Inbound {
    std::size_t connection = 0;
    std::optional<Message> message;  // empty: link failed, see error
    std::string error;
  };

  explicit MessageHub(std::size_t horizon) : horizon_(horizon) {}

  std::vector<std::string> participants() const override {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : registered_) ids.push_back(id);
    return ids;
  }
  std::size_t horizon() const override { return horizon_; }

  /// Processes registrations until every expected id has registered.
  /// Unknown, duplicate or mismatched registrations are rejected.
  void await_registrations(const std::set<std::string>& expected, Clock::time_point deadline) {
    while (registered_count() < expected.size()) {
      auto in = inbox_.pop(deadline);
      if (!in) {
        std::vector<std::string> missing;
        for (const auto& id : expected) {
          if (!is_registered(id)) missing.push_back(id);
        }
        if (registered_count() == 0) {
          throw ProtocolError("no agents registered before the deadline (" + std::to_string(expected.size()) +
                                  " expected)",
                              missing);
        }
        throw ProtocolError("registration incomplete, missing " + LocalNetwork::join_ids(missing), missing);
      }
      handle_registration(*in, expected);
    }
    registration_open_ = false;
  }

  std::size_t broadcast_prices(int iteration, const PriceVector& prices) override {
    const Message msg = PriceAnnounce{iteration, prices.raw()};
    std::size_t acks = 0;
    for (const auto& id : participants()) {
      try {
        link_for(id).send(msg);
      } catch (const ProtocolError& e) {
        throw ProtocolError("cannot reach '" + id + "': " + e.what(), {id});
      }
      ++acks;
    }
    return acks;
  }

  std::vector<DeviceBid> collect_bids(int iteration, std::span<const std::string> expected,
                                      std::chrono::milliseconds timeout) override {
    const auto deadline = Clock::now() + timeout;
    std::map<std::string, DeviceBid> got;
    const std::set<std::string> want(expected.begin(), expected.end());
    while (got.size() < want.size()) {
      auto in = inbox_.pop(deadline);
      if (!in) {
        std::vector<std::string> missing;
        for (const auto& id : want) {
          if (!got.count(id)) missing.push_back(id);
        }
        throw ProtocolError("timed out waiting for bids from " + LocalNetwork::join_ids(missing), missing);
      }
      const std::string from = device_for(in->connection);
      if (from.empty()) {
        // Late joiners are turned away; anything else from them is ignored.
        if (in->message) {
          if (auto* reg = std::get_if<Register>(&*in->message)) reject(in->connection, reg->device_id, "registration is closed");
        }
        continue;
      }
      if (!in->message) throw ProtocolError("participant '" + from + "' failed: " + in->error, {from});
      auto* bid = std::get_if<BidSubmit>(&*in->message);
      if (!bid) {
        throw ProtocolError(std::string("unexpected '") + message_type(*in->message) + "' from '" + from + "'",
                            {from});
      }
      if (bid->device_id != from || !want.count(bid->device_id)) {
        throw ProtocolError("bid for unknown participant '" + bid->device_id + "'", {bid->device_id});
      }
      if (bid->iteration != iteration) {
        throw ProtocolError("bid from '" + from + "' for iteration " + std::to_string(bid->iteration) +
                                " during iteration " + std::to_string(iteration),
                            {from});
      }
      if (bid->demand.size() != horizon_) {
        throw ProtocolError("bid from '" + from + "' has the wrong horizon", {from});
      }
      if (!got.emplace(from, to_device_bid(*bid)).second) {
        throw ProtocolError("duplicate bid from '" + from + "'", {from});
      }
    }
    std::vector<DeviceBid> out;
    for (auto& [_, b] : got) out.push_back(std::move(b));
    return out;
  }

  void allocate(const FinalAllocate& a) override { link_for(a.device_id).send(a); }

 protected:
  void add_link(std::size_t connection, std::unique_ptr<CoordinatorLink> link) {
    std::lock_guard lock(mutex_);
    links_.emplace(connection, std::move(link));
  }

  void send_shutdown_to_all() {
    std::lock_guard lock(mutex_);
    for (auto& [_, link] : links_) {
      try {
        link->send(Shutdown{});
      } catch (const ProtocolError&) {
      }
    }
  }

  void close_all_links() {
    std::lock_guard lock(mutex_);
    for (auto& [_, link] : links_) link->close();
  }

  Channel<Inbound> inbox_;
  bool registration_open_ = true;

 private:
  void handle_registration(const Inbound& in, const std::set<std::string>& expected) {
    if (!in.message) return;  // a connection that died before registering
    auto* reg = std::get_if<Register>(&*in.message);
    if (!reg) {
      reject(in.connection, "", std::string("expected a register message, got '") + message_type(*in.message) + "'");
      return;
    }
    if (!expected.count(reg->device_id)) {
      reject(in.connection, reg->device_id, "unknown device id '" + reg->device_id + "'");
      return;
    }
    if (is_registered(reg->device_id)) {
      reject(in.connection, reg->device_id, "device id '" + reg->device_id + "' is already registered");
      return;
    }
    if (reg->horizon != horizon_) {
      reject(in.connection, reg->device_id,
             "horizon " + std::to_string(reg->horizon) + " does not match " + std::to_string(horizon_));
      return;
    }
    std::lock_guard lock(mutex_);
    registered_.emplace(reg->device_id, in.connection);
    device_of_.emplace(in.connection, reg->device_id);
  }

  void reject(std::size_t connection, const std::string& id, const std::string& reason) {
    std::lock_guard lock(mutex_);
    auto it = links_.find(connection);
    if (it == links_.end()) return;
    try {
      it->second->send(Reject{id, reason});
    } catch (const ProtocolError&) {
    }
    it->second->close();
    rejections_.push_back(reason);
  }

  CoordinatorLink& link_for(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = registered_.find(id);
    if (it == registered_.end()) throw ProtocolError("participant '" + id + "' is not registered", {id});
    return *links_.at(it->second);
  }

  std::string device_for(std::size_t connection) const {
    std::lock_guard lock(mutex_);
    auto it = device_of_.find(connection);
    return it == device_of_.end() ? std::string() : it->second;
  }

  bool is_registered(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return registered_.count(id) > 0;
  }

  std::size_t registered_count() const {
    std::lock_guard lock(mutex_);
    return registered_.size();
  }

 public:
  std::vector<std::string> rejections() const {
    std::lock_guard lock(mutex_);
    return rejections_;
  }

 private:
  std::size_t horizon_;
  mutable std::mutex mutex_;
  std::map<std::size_t, std::unique_ptr<CoordinatorLink>> links_;
  std::map<std::string, std::size_t> registered_;
  std::map<std::size_t, std::string> device_of_;
  std::vector<std::string> rejections_;
};

}  // namespace dwm
