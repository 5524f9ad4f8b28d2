#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dwmarket/transport/network.hpp"

namespace dwm {

/// A feeder-level node: forwards prices to its children unchanged and reports
/// their summed bid upward as if it were one large device.
class AggregatorNode : public Agent {
 public:
  AggregatorNode(std::string id, std::unique_ptr<DeviceNetwork> children,
                 std::chrono::milliseconds round_timeout = std::chrono::seconds(30))
      : id_(std::move(id)), children_(std::move(children)), timeout_(round_timeout) {}

  const std::string& id() const override { return id_; }
  std::size_t horizon() const override { return children_->horizon(); }

  BidSubmit respond(const PriceAnnounce& announce) override {
    if (announce.prices.size() != horizon()) {
      throw ProtocolError("price vector of length " + std::to_string(announce.prices.size()) + " for horizon " +
                              std::to_string(horizon()),
                          {id_});
    }
    const auto ids = children_->participants();
    children_->broadcast_prices(announce.iteration, PriceVector(announce.prices));
    auto bids = children_->collect_bids(announce.iteration, ids, timeout_);

    BidAccumulator acc(horizon());
    for (const auto& b : bids) {
      if (b.terms) {
        acc.add(*b.terms);
      } else {
        acc.add(b.bid);
      }
    }
    const Bid total = acc.result();
    history_[announce.iteration] = std::move(bids);
    return BidSubmit{announce.iteration, id_, total.demand.raw(), total.benefit, acc.terms()};
  }

  /// Splits the final purchase among the children with the master's weights.
  void allocate(const FinalAllocate& a) override {
    if (a.weights.size() != a.rounds.size()) throw ProtocolError("allocation weights and rounds differ in length", {id_});
    for (const auto& child : children_->participants()) {
      DemandVector d(horizon());
      for (std::size_t i = 0; i < a.weights.size(); ++i) {
        if (a.weights[i] == 0.0) continue;
        auto round = history_.find(a.rounds[i]);
        if (round == history_.end()) {
          throw ProtocolError("no bids recorded for round " + std::to_string(a.rounds[i]), {id_});
        }
        const DeviceBid* found = nullptr;
        for (const auto& b : round->second) {
          if (b.device_id == child) found = &b;
        }
        if (!found) throw ProtocolError("no bid from '" + child + "' in round " + std::to_string(a.rounds[i]), {child});
        d.add_scaled(a.weights[i], found->bid.demand);
      }
      children_->allocate(FinalAllocate{child, d.raw(), a.prices, a.weights, a.rounds});
    }
  }

  void shutdown() override { children_->shutdown(); }

  DeviceNetwork& children() { return *children_; }

 private:
  std::string id_;
  std::unique_ptr<DeviceNetwork> children_;
  std::chrono::milliseconds timeout_;
  std::map<int, std::vector<DeviceBid>> history_;
};

}  // namespace dwm
