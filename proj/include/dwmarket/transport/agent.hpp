#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "dwmarket/devices.hpp"
#include "dwmarket/scenario.hpp"
#include "dwmarket/transport/channel.hpp"
#include "dwmarket/transport/message.hpp"

namespace dwm {

/// The agent's side of a connection to the coordinator (or to a parent aggregator).
class AgentLink {
 public:
  virtual ~AgentLink() = default;
  virtual void send(const Message& msg) = 0;
  /// Next message; nullopt on timeout. Throws ProtocolError if the link is gone.
  virtual std::optional<Message> receive(Clock::time_point deadline) = 0;
};

/// Anything that answers price announcements with a bid: a device or an aggregator.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual const std::string& id() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual BidSubmit respond(const PriceAnnounce& announce) = 0;
  virtual void allocate(const FinalAllocate&) {}
  virtual void shutdown() {}
};

/// A price-responsive device answering with its private best response.
class DeviceAgent : public Agent {
 public:
  DeviceAgent(DeviceConfig device, std::size_t horizon) : device_(std::move(device)), horizon_(horizon) {}

  const std::string& id() const override { return device_.id; }
  std::size_t horizon() const override { return horizon_; }
  const DeviceConfig& device() const { return device_; }

  BidSubmit respond(const PriceAnnounce& announce) override {
    if (announce.prices.size() != horizon_) {
      throw ProtocolError("price vector of length " + std::to_string(announce.prices.size()) + " for horizon " +
                          std::to_string(horizon_), {device_.id});
    }
    const Bid bid = best_response(PriceVector(announce.prices), device_.spec);
    return BidSubmit{announce.iteration, device_.id, bid.demand.raw(), bid.benefit, std::nullopt};
  }

  void allocate(const FinalAllocate& a) override { allocation_ = a; }
  const std::optional<FinalAllocate>& allocation() const { return allocation_; }

 private:
  DeviceConfig device_;
  std::size_t horizon_;
  std::optional<FinalAllocate> allocation_;
};

/// Agent main loop: register, then answer every price announcement until shutdown.
inline void run_agent(Agent& agent, AgentLink& link,
                      std::chrono::milliseconds idle_timeout = std::chrono::minutes(5)) {
  link.send(Register{agent.id(), agent.horizon()});
  for (;;) {
    auto msg = link.receive(Clock::now() + idle_timeout);
    if (!msg) throw ProtocolError("agent '" + agent.id() + "' timed out waiting for the coordinator", {agent.id()});
    if (auto* p = std::get_if<PriceAnnounce>(&*msg)) {
      link.send(agent.respond(*p));
    } else if (auto* a = std::get_if<FinalAllocate>(&*msg)) {
      agent.allocate(*a);
    } else if (std::holds_alternative<Shutdown>(*msg)) {
      agent.shutdown();
      return;
    } else if (auto* r = std::get_if<Reject>(&*msg)) {
      agent.shutdown();
      throw ProtocolError("coordinator rejected '" + agent.id() + "': " + r->reason, {agent.id()});
    } else {
      throw ProtocolError(std::string("agent received unexpected '") + message_type(*msg) + "' message",
                          {agent.id()});
    }
  }
}

}  // namespace dwm
