#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dwmarket/dwmarket.hpp"

namespace {

constexpr int kExitConverged = 0;
constexpr int kExitConfig = 1;
constexpr int kExitIterationLimit = 2;
constexpr int kExitProtocol = 3;

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dwm::ValidationError({"$: cannot open '" + path + "'"});
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::chrono::milliseconds seconds(double s) {
  return std::chrono::milliseconds(static_cast<long long>(s * 1000.0));
}

struct RunOptions {
  std::string scenario;
  int households = 8;
  std::uint64_t seed = 42;
  std::string out = "out";
  int iters = 0;
  double gap_tol = -1.0;
  std::string transport = "inproc";
  bool svg = false;
  double round_timeout = 30.0;
  double register_timeout = 30.0;
  std::string listen;
  std::string address_file;
};

dwm::ScenarioConfig scenario_for(const RunOptions& o) {
  if (!o.scenario.empty()) return dwm::load_scenario(o.scenario);
  return dwm::generate_scenario(o.households, o.seed);
}

dwm::DwSettings settings_for(const dwm::ScenarioConfig& cfg, const RunOptions& o) {
  auto s = dwm::DwSettings::from(cfg);
  if (o.iters > 0) s.max_iters = o.iters;
  if (o.gap_tol >= 0.0) s.gap_tol = o.gap_tol;
  s.round_timeout = seconds(o.round_timeout);
  return s;
}

int finish(const dwm::DwResult& r, const dwm::ScenarioConfig& cfg, const RunOptions& o) {
  dwm::write_report(r, o.out, cfg.horizon, o.svg);
  const auto& last = r.records.back();
  std::cerr << dwm::to_string(r.status) << " after " << r.records.size() << " iteration(s); gap "
            << dwm::format_number(last.gap) << ", objective " << dwm::format_number(r.final_master.objective)
            << "; report in " << o.out << "\n";
  return r.status == dwm::RunStatus::Converged ? kExitConverged : kExitIterationLimit;
}

std::vector<std::shared_ptr<dwm::Agent>> device_agents(const dwm::ScenarioConfig& cfg) {
  std::vector<std::shared_ptr<dwm::Agent>> agents;
  for (const auto& d : cfg.devices()) agents.push_back(std::make_shared<dwm::DeviceAgent>(d, cfg.horizon));
  return agents;
}

std::set<std::string> device_ids(const dwm::ScenarioConfig& cfg) {
  std::set<std::string> ids;
  for (const auto& d : cfg.devices()) ids.insert(d.id);
  return ids;
}

int cmd_run(const RunOptions& o) {
  const auto cfg = scenario_for(o);
  const auto settings = settings_for(cfg, o);
  if (o.transport == "local") {
    auto net = dwm::LocalNetwork::from_scenario(cfg);
    return finish(dwm::run_dw(cfg, settings, *net), cfg, o);
  }
  if (o.transport == "inproc") {
    auto net = dwm::InprocNetwork::start(cfg.horizon, device_agents(cfg), seconds(o.register_timeout));
    auto result = dwm::run_dw(cfg, settings, *net);
    net->shutdown();
    return finish(result, cfg, o);
  }
  dwm::TcpNetwork net(cfg.horizon, o.listen.empty() ? "127.0.0.1:0" : o.listen);
  dwm::TcpAgentPool pool(device_agents(cfg), net.address());
  dwm::DwResult result;
  try {
    net.accept_registrations(device_ids(cfg), dwm::Clock::now() + seconds(o.register_timeout));
    result = dwm::run_dw(cfg, settings, net);
  } catch (...) {
    net.shutdown();
    throw;
  }
  net.shutdown();
  for (const auto& e : pool.join()) std::cerr << "agent " << e << "\n";
  return finish(result, cfg, o);
}

int cmd_serve(const RunOptions& o) {
  const auto cfg = scenario_for(o);
  const auto settings = settings_for(cfg, o);
  dwm::TcpNetwork net(cfg.horizon, o.listen);
  std::cerr << "listening on " << net.address() << std::endl;
  if (!o.address_file.empty()) {
    // Written to a temporary name first so that readers never see a partial address.
    const std::string tmp = o.address_file + ".tmp";
    dwm::write_text(tmp, net.address() + "\n");
    std::filesystem::rename(tmp, o.address_file);
  }
  net.accept_registrations(device_ids(cfg), dwm::Clock::now() + seconds(o.register_timeout));
  for (const auto& r : net.rejections()) std::cerr << "rejected: " << r << "\n";
  auto result = dwm::run_dw(cfg, settings, net);
  net.shutdown();
  return finish(result, cfg, o);
}

struct AgentOptions {
  std::string connect;
  std::string device_spec;
  std::string scenario;
  std::string device;
  double connect_timeout = 10.0;
};

int cmd_agent(const AgentOptions& o) {
  std::optional<dwm::DeviceConfig> device;
  std::size_t horizon = dwm::kDefaultHorizon;
  if (!o.device_spec.empty()) {
    auto [dev, h] = dwm::parse_device(read_file(o.device_spec));
    device = std::move(dev);
    horizon = h;
  } else if (!o.scenario.empty() && !o.device.empty()) {
    const auto cfg = dwm::load_scenario(o.scenario);
    horizon = cfg.horizon;
    for (const auto& d : cfg.devices()) {
      if (d.id == o.device) device = d;
    }
    if (!device) throw dwm::ValidationError({"device '" + o.device + "' is not in " + o.scenario});
  } else {
    throw CLI::ValidationError("agent", "needs --device-spec, or --scenario together with --device");
  }
  dwm::DeviceAgent agent(*device, horizon);
  dwm::run_tcp_agent(agent, o.connect, seconds(o.connect_timeout));
  if (agent.allocation()) {
    std::cout << dwm::encode(dwm::Message(*agent.allocation())) << "\n";
  }
  return kExitConverged;
}

int cmd_generate(int households, std::uint64_t seed, const std::string& out) {
  if (households < 0) throw CLI::ValidationError("--households", "must be >= 0");
  const std::string text = dwm::serialize_scenario(dwm::generate_scenario(households, seed));
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    dwm::write_text(out, text);
  }
  return 0;
}

int cmd_validate(const std::string& path) {
  const auto cfg = dwm::load_scenario(path);
  std::cout << path << ": ok (" << cfg.households.size() << " households, " << cfg.devices().size()
            << " devices, horizon " << cfg.horizon << ")\n";
  return 0;
}

int cmd_oracle(const std::string& path, double delta) {
  const auto cfg = dwm::load_scenario(path);
  const auto best = dwm::joint_enumerate(cfg, delta);
  const auto dw = dwm::run_dw(cfg);
  nlohmann::json j;
  j["delta"] = delta;
  j["combinations"] = best.combinations;
  j["oracle_demand"] = best.demand.raw();
  j["oracle_net_cost"] = best.net_cost;
  j["dw_demand"] = dw.final_master.constructed_demand.raw();
  j["dw_net_cost"] = dw.final_master.objective;
  const double peak = std::max(best.demand.size() ? best.demand.max() : 0.0,
                               dw.final_master.constructed_demand.size() ? dw.final_master.constructed_demand.max() : 0.0);
  j["bound"] = dwm::discretization_bound(cfg.supply, cfg.horizon, delta, peak);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Price-coordinated demand scheduling: coordinator, device agents and reports"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run the full market loop in one process");
  auto* run_scenario = run->add_option("--scenario", run_opts.scenario, "Scenario JSON file")->check(CLI::ExistingFile);
  run->add_option("--households", run_opts.households, "Generate this many households (without --scenario)")
      ->excludes(run_scenario);
  run->add_option("--seed", run_opts.seed, "Seed for the generated scenario")->excludes(run_scenario);
  run->add_option("--out", run_opts.out, "Output directory")->capture_default_str();
  run->add_option("--iters", run_opts.iters, "Maximum iterations (default: scenario value)")->check(CLI::PositiveNumber);
  run->add_option("--gap-tol", run_opts.gap_tol, "Gap tolerance (default: scenario value or 1e-6 (1 + C(D0)))")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--transport", run_opts.transport, "local, inproc or tcp")
      ->check(CLI::IsMember({"local", "inproc", "tcp"}))
      ->capture_default_str();
  run->add_option("--timeout", run_opts.round_timeout, "Seconds to wait for each round's bids")->capture_default_str();
  run->add_flag("--svg", run_opts.svg, "Also write SVG charts");

  RunOptions serve_opts;
  serve_opts.listen = env_or("DWMARKET_LISTEN", "127.0.0.1:7878");
  auto* serve = app.add_subcommand("serve", "Coordinate TCP device agents");
  serve->add_option("--listen", serve_opts.listen, "host:port (env DWMARKET_LISTEN)")->capture_default_str();
  serve->add_option("--scenario", serve_opts.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  serve->add_option("--out", serve_opts.out, "Output directory")->capture_default_str();
  serve->add_option("--iters", serve_opts.iters, "Maximum iterations")->check(CLI::PositiveNumber);
  serve->add_option("--gap-tol", serve_opts.gap_tol, "Gap tolerance")->check(CLI::NonNegativeNumber);
  serve->add_option("--register-timeout", serve_opts.register_timeout, "Seconds to wait for all agents")
      ->capture_default_str();
  serve->add_option("--timeout", serve_opts.round_timeout, "Seconds to wait for each round's bids")
      ->capture_default_str();
  serve->add_option("--address-file", serve_opts.address_file, "Write the bound address here once listening");
  serve->add_flag("--svg", serve_opts.svg, "Also write SVG charts");

  AgentOptions agent_opts;
  agent_opts.connect = env_or("DWMARKET_CONNECT", "127.0.0.1:7878");
  auto* agent = app.add_subcommand("agent", "Run one device agent against a coordinator");
  agent->add_option("--connect", agent_opts.connect, "host:port (env DWMARKET_CONNECT)")->capture_default_str();
  agent->add_option("--device-spec", agent_opts.device_spec, "Single-device JSON file")->check(CLI::ExistingFile);
  agent->add_option("--scenario", agent_opts.scenario, "Scenario JSON file (with --device)")->check(CLI::ExistingFile);
  agent->add_option("--device", agent_opts.device, "Device id within --scenario");
  agent->add_option("--connect-timeout", agent_opts.connect_timeout, "Seconds to keep retrying the connection")
      ->capture_default_str();

  int gen_households = 8;
  std::uint64_t gen_seed = 42;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Write a randomized scenario");
  generate->add_option("--households", gen_households, "Number of households")->capture_default_str();
  generate->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  generate->add_option("--out", gen_out, "Output file (default: stdout)");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a scenario file and report every problem");
  validate->add_option("scenario", validate_path, "Scenario JSON file")->required();

  std::string oracle_path;
  double oracle_delta = 0.25;
  auto* oracle = app.add_subcommand("oracle", "");  // hidden: brute-force comparison on tiny scenarios
  oracle->group("");
  oracle->add_option("--scenario", oracle_path)->required()->check(CLI::ExistingFile);
  oracle->add_option("--delta", oracle_delta)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*serve) return cmd_serve(serve_opts);
    if (*agent) return cmd_agent(agent_opts);
    if (*generate) return cmd_generate(gen_households, gen_seed, gen_out);
    if (*validate) return cmd_validate(validate_path);
    if (*oracle) return cmd_oracle(oracle_path, oracle_delta);
  } catch (const dwm::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const dwm::ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const dwm::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
