#pragma once

#include <functional>
#include <memory>
#include <set>
#include <thread>
#include <vector>

#include "dwmarket/scenario.hpp"
#include "dwmarket/transport/network.hpp"

namespace dwm {

/// Agents run on their own threads and talk to the coordinator over in-memory channels.
class InprocNetwork : public MessageHub {
 public:
  using AgentTask = std::function<void(AgentLink&)>;

  InprocNetwork(std::size_t horizon, std::vector<AgentTask> tasks) : MessageHub(horizon) {
    downlinks_.reserve(tasks.size());
    for (std::size_t c = 0; c < tasks.size(); ++c) downlinks_.push_back(std::make_unique<Channel<Message>>());
    for (std::size_t c = 0; c < tasks.size(); ++c) add_link(c, std::make_unique<Downlink>(*downlinks_[c]));
    for (std::size_t c = 0; c < tasks.size(); ++c) {
      threads_.emplace_back([this, c, task = std::move(tasks[c])] {
        Uplink link(*downlinks_[c], inbox_, c);
        try {
          task(link);
        } catch (const std::exception& e) {
          inbox_.push(Inbound{c, std::nullopt, e.what()});
        }
      });
    }
  }

  /// Starts one DeviceAgent thread per agent and waits for all of them to register.
  static std::unique_ptr<InprocNetwork> start(std::size_t horizon, std::vector<std::shared_ptr<Agent>> agents,
                                              std::chrono::milliseconds registration_timeout = std::chrono::seconds(30)) {
    std::vector<AgentTask> tasks;
    std::set<std::string> expected;
    for (auto& a : agents) {
      expected.insert(a->id());
      tasks.push_back([a](AgentLink& link) { run_agent(*a, link); });
    }
    auto net = std::make_unique<InprocNetwork>(horizon, std::move(tasks));
    net->agents_ = std::move(agents);
    net->await_registrations(expected, Clock::now() + registration_timeout);
    return net;
  }

  static std::unique_ptr<InprocNetwork> from_scenario(const ScenarioConfig& cfg) {
    std::vector<std::shared_ptr<Agent>> agents;
    for (auto& d : cfg.devices()) agents.push_back(std::make_shared<DeviceAgent>(d, cfg.horizon));
    return start(cfg.horizon, std::move(agents));
  }

  ~InprocNetwork() override { shutdown(); }

  void shutdown() override {
    if (stopped_) return;
    stopped_ = true;
    send_shutdown_to_all();
    close_all_links();
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
    inbox_.close();
  }

  const std::vector<std::shared_ptr<Agent>>& agents() const { return agents_; }

 private:
  class Downlink : public CoordinatorLink {
   public:
    explicit Downlink(Channel<Message>& ch) : ch_(ch) {}
    void send(const Message& msg) override {
      if (!ch_.push(msg)) throw ProtocolError("in-process link is closed");
    }
    void close() override { ch_.close(); }

   private:
    Channel<Message>& ch_;
  };

  class Uplink : public AgentLink {
   public:
    Uplink(Channel<Message>& down, Channel<Inbound>& up, std::size_t connection)
        : down_(down), up_(up), connection_(connection) {}
    void send(const Message& msg) override {
      if (!up_.push(Inbound{connection_, msg, {}})) throw ProtocolError("coordinator is gone");
    }
    std::optional<Message> receive(Clock::time_point deadline) override {
      auto m = down_.pop(deadline);
      if (!m && down_.closed()) throw ProtocolError("coordinator closed the link");
      return m;
    }

   private:
    Channel<Message>& down_;
    Channel<Inbound>& up_;
    std::size_t connection_;
  };

  std::vector<std::unique_ptr<Channel<Message>>> downlinks_;
  std::vector<std::thread> threads_;
  std::vector<std::shared_ptr<Agent>> agents_;
  bool stopped_ = false;
};

}  // namespace dwm
