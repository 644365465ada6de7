// resumetrace: TLS session resumption measurement, simulation, and
// tracking-metric analysis.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "resumetrace/analyzer.hpp"
#include "resumetrace/fixture.hpp"
#include "resumetrace/ingest.hpp"
#include "resumetrace/mechmodel.hpp"
#include "resumetrace/report.hpp"
#include "resumetrace/scanner.hpp"
#include "resumetrace/tlssim.hpp"
#include "resumetrace/util.hpp"

namespace fs = std::filesystem;
using namespace resumetrace;

namespace {

std::vector<std::int64_t> parse_lifetime_list(const std::string& csv) {
  std::vector<std::int64_t> out;
  for (const std::string& field : split(csv, ',')) {
    out.push_back(parse_i64(field));
  }
  return out;
}

MechanismKind parse_kind(const std::string& name) {
  if (name == "ticket" || name == "session_ticket") return MechanismKind::SessionTicket;
  if (name == "id" || name == "session_id") return MechanismKind::SessionId;
  throw CLI::ValidationError("--kind", "expected ticket or session_id");
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TLS session resumption tracking toolkit"};
  app.require_subcommand(1);
#ifdef RESUMETRACE_VERSION
  app.set_version_flag("--version", std::string(RESUMETRACE_VERSION));
#endif

  // --- scan -----------------------------------------------------------------
  auto* scan_cmd = app.add_subcommand("scan", "probe hosts for resumption support");
  std::string scan_hosts_file, scan_out;
  scan::ScanConfig scan_config;
  bool dry_run = false;
  scan_cmd->add_option("--hosts", scan_hosts_file, "host list (plain or rank,host CSV)")
      ->required();
  scan_cmd->add_option("--out", scan_out, "output JSONL (appended)")->required();
  scan_cmd->add_option("--concurrency", scan_config.max_concurrency, "worker pool size");
  scan_cmd->add_option("--timeout", scan_config.timeout_s, "per-connection timeout (s)");
  scan_cmd->add_option("--port", scan_config.port, "default port");
  scan_cmd->add_option("--interval", scan_config.per_host_min_interval_s,
                       "min seconds between probes to one host");
  scan_cmd->add_flag("--dry-run", dry_run, "print the probe plan without connecting");

  // --- lifetime ---------------------------------------------------------------
  auto* lifetime_cmd = app.add_subcommand("lifetime", "bracket a host's resumption lifetime");
  std::string lt_host, lt_kind = "ticket", lt_schedule, lt_out;
  scan::ScanConfig lt_config;
  lifetime_cmd->add_option("--host", lt_host, "host or host:port")->required();
  lifetime_cmd->add_option("--kind", lt_kind, "ticket | session_id");
  lifetime_cmd->add_option("--schedule", lt_schedule, "comma-separated delays (s)");
  lifetime_cmd->add_option("--out", lt_out, "append CSV here instead of stdout");
  lifetime_cmd->add_option("--port", lt_config.port, "default port");
  lifetime_cmd->add_option("--timeout", lt_config.timeout_s, "per-connection timeout (s)");
  lifetime_cmd->add_option("--interval", lt_config.per_host_min_interval_s,
                           "min seconds between trials");

  // --- stek ---------------------------------------------------------------------
  auto* stek_cmd = app.add_subcommand("stek", "estimate STEK rotation from daily scans");
  std::string stek_in, stek_out;
  stek_cmd->add_option("--in", stek_in, "directory of per-day probe JSONL files")->required();
  stek_cmd->add_option("--out", stek_out, "rotation CSV")->required();

  // --- shared-state ----------------------------------------------------------------
  auto* shared_cmd = app.add_subcommand("shared-state", "group hosts by shared TLS state");
  std::string shared_hosts_file, shared_out;
  scan::ScanConfig shared_config;
  shared_cmd->add_option("--hosts", shared_hosts_file, "host list")->required();
  shared_cmd->add_option("--out", shared_out, "write groups here instead of stdout");
  shared_cmd->add_option("--port", shared_config.port, "default port");
  shared_cmd->add_option("--timeout", shared_config.timeout_s, "per-connection timeout (s)");
  shared_cmd->add_option("--interval", shared_config.per_host_min_interval_s,
                         "min seconds between probes to one host");

  // --- simulate -----------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate", "replay a visit schedule (prolongation model)");
  std::string sim_schedule, sim_out, sim_preset, sim_presets_file;
  std::int64_t sim_cap_id = 86'400, sim_cap_ticket = 86'400;
  std::int64_t sim_hint = 86'400, sim_window = 86'400;
  bool sim_sticky = false, sim_partition = false, sim_no_reissue = false;
  sim_cmd->add_option("--schedule", sim_schedule, "CSV timestamp_ms,host,first_party")
      ->required();
  sim_cmd->add_option("--out", sim_out, "linkage CSV output")->required();
  sim_cmd->add_option("--preset", sim_preset, "client policy preset name");
  sim_cmd->add_option("--presets-file", sim_presets_file, "preset data file");
  sim_cmd->add_option("--cap-id", sim_cap_id, "client session-id lifetime cap (s)");
  sim_cmd->add_option("--cap-ticket", sim_cap_ticket, "client ticket lifetime cap (s)");
  sim_cmd->add_option("--hint", sim_hint, "server lifetime hint (s)");
  sim_cmd->add_option("--window", sim_window, "server accept window (s)");
  sim_cmd->add_flag("--sticky-expiry", sim_sticky, "client sticks to the initial expiry");
  sim_cmd->add_flag("--partition", sim_partition, "partition cache by first party");
  sim_cmd->add_flag("--no-reissue", sim_no_reissue, "server issues identifiers only once");

  // --- analyze -----------------------------------------------------------------
  auto* analyze_cmd = app.add_subcommand("analyze", "tracking metrics over a visit log");
  std::string an_log, an_metric, an_lifetimes, an_out;
  std::int64_t an_window_start = 0, an_window_end = 0;
  analyze_cmd->add_option("--log", an_log, "canonical visit CSV")->required();
  analyze_cmd->add_option("--metric", an_metric, "lctp | permanent | rr | revisit-cdf")
      ->required();
  analyze_cmd->add_option("--lifetimes", an_lifetimes, "comma-separated grid (s)");
  analyze_cmd->add_option("--window-start", an_window_start, "sample window start (ms)");
  analyze_cmd->add_option("--window-end", an_window_end, "sample window end (ms)");
  analyze_cmd->add_option("--out", an_out, "output directory")->required();

  // --- ingest -----------------------------------------------------------------
  auto* ingest_cmd = app.add_subcommand("ingest", "pseudonymize a raw visit/DNS log");
  std::string ig_in, ig_key, ig_out;
  ingest_cmd->add_option("--in", ig_in, "raw CSV source_id,ts_ms,target_host,query_type")
      ->required();
  ingest_cmd->add_option("--key-file", ig_key, "pseudonymization secret")->required();
  ingest_cmd->add_option("--out", ig_out, "canonical CSV output")->required();

  // --- synth -----------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic visit log + manifest");
  std::string sy_spec, sy_out;
  std::uint64_t sy_seed = 1;
  synth_cmd->add_option("--spec", sy_spec, "JSON generator spec")->required();
  synth_cmd->add_option("--seed", sy_seed, "RNG seed");
  synth_cmd->add_option("--out", sy_out, "output directory")->required();

  // --- report -----------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "build the summary bundle");
  std::string rp_in, rp_out;
  report_cmd->add_option("--in", rp_in, "directory of scan/analyzer outputs")->required();
  report_cmd->add_option("--out", rp_out, "bundle directory")->required();

  // --- fixture -----------------------------------------------------------------
  auto* fixture_cmd = app.add_subcommand("fixture", "run a loopback TLS test server");
  std::string fx_config_file;
  fixture_cmd->add_option("--config", fx_config_file, "key=value fixture config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*scan_cmd) {
      auto in = open_input(scan_hosts_file);
      std::vector<std::string> hosts = scan::load_host_list(in);
      if (dry_run) {
        std::cout << "plan: " << hosts.size() << " hosts, concurrency "
                  << scan_config.max_concurrency << ", timeout " << scan_config.timeout_s
                  << " s, >= " << scan_config.per_host_min_interval_s
                  << " s between probes to one host, port " << scan_config.port << "\n";
        for (const std::string& h : hosts) std::cout << h << "\n";
        return 0;
      }
      std::vector<std::string> done;
      if (fs::exists(scan_out)) {
        std::ifstream existing(scan_out);
        std::string line;
        while (std::getline(existing, line)) {
          auto sv = trim(line);
          if (sv.empty()) continue;
          done.push_back(nlohmann::json::parse(sv).at("host").get<std::string>());
        }
      }
      std::ofstream out(scan_out, std::ios::app);
      if (!out) throw std::runtime_error("cannot open output: " + scan_out);
      scan::scan_hosts(hosts, scan_config, out, done);
      std::cerr << "scanned " << hosts.size() - done.size() << " hosts (" << done.size()
                << " already present)\n";
    } else if (*lifetime_cmd) {
      if (!lt_schedule.empty()) {
        lt_config.revisit_schedule_s = parse_lifetime_list(lt_schedule);
      }
      MechanismKind kind = parse_kind(lt_kind);
      scan::LifetimeBracket bracket = scan::measure_lifetime(lt_host, kind, lt_config);
      std::ostringstream row;
      row << lt_host << ',' << to_string(kind) << ',' << bracket.lo_s << ','
          << (bracket.hi_s ? std::to_string(*bracket.hi_s) : "inf") << '\n';
      if (lt_out.empty()) {
        std::cout << "host,kind,lo_s,hi_s\n" << row.str();
      } else {
        bool fresh = !fs::exists(lt_out);
        std::ofstream out(lt_out, std::ios::app);
        if (fresh) out << "host,kind,lo_s,hi_s\n";
        out << row.str();
      }
      for (const auto& [delay, accepted] : bracket.trials) {
        std::cerr << "delay " << delay << " s: " << (accepted ? "accepted" : "rejected") << "\n";
      }
    } else if (*stek_cmd) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(stek_in)) {
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<scan::StekObservation> observations;
      for (std::size_t day = 0; day < files.size(); ++day) {
        std::ifstream in(files[day]);
        std::string line;
        while (std::getline(in, line)) {
          auto sv = trim(line);
          if (sv.empty()) continue;
          auto record = scan::ScanProbeResult::from_json(nlohmann::json::parse(sv));
          if (record.ticket.size() >= 16) {
            observations.push_back({record.host, static_cast<int>(day),
                                    scan::extract_stek_keyname(record.ticket)});
          }
        }
      }
      scan::RotationSummary summary = scan::estimate_stek_rotation(std::move(observations));
      std::ofstream out(stek_out);
      out << "host,rotation_days,lower_bound\n";
      for (const auto& e : summary.per_host) {
        out << e.host << ',' << e.rotation_days << ',' << (e.lower_bound ? "true" : "false")
            << '\n';
      }
      std::cerr << summary.per_host.size() << " hosts, " << files.size() << " day files\n";
    } else if (*shared_cmd) {
      auto in = open_input(shared_hosts_file);
      std::vector<std::string> hosts = scan::load_host_list(in);
      scan::SharedStateResult result = scan::shared_state_groups(hosts, shared_config);
      std::ostringstream text;
      for (const auto& group : result.groups) {
        text << "group:";
        for (const std::string& h : group) text << ' ' << h;
        text << '\n';
      }
      text << "singletons: " << result.singleton_count() << '\n';
      text << "pair_errors: " << result.pair_errors << '\n';
      if (shared_out.empty()) {
        std::cout << text.str();
      } else {
        std::ofstream out(shared_out);
        out << text.str();
      }
    } else if (*sim_cmd) {
      ClientPolicy client;
      if (!sim_preset.empty()) {
        if (sim_presets_file.empty()) {
          throw std::runtime_error("--preset needs --presets-file");
        }
        auto presets = load_presets_file(sim_presets_file);
        auto preset = find_preset(presets, sim_preset);
        if (!preset) throw std::runtime_error("unknown preset: " + sim_preset);
        client = to_client_policy(*preset);
      } else {
        client.lifetime_cap_s[MechanismKind::SessionId] = sim_cap_id;
        client.lifetime_cap_s[MechanismKind::SessionTicket] = sim_cap_ticket;
        client.resumption_enabled[MechanismKind::SessionId] = sim_cap_id > 0;
        client.resumption_enabled[MechanismKind::SessionTicket] = sim_cap_ticket > 0;
        client.resumption_enabled[MechanismKind::Psk0Rtt] = false;
        client.resumption_enabled[MechanismKind::Psk1Rtt] = false;
      }
      client.sticky_expiry = sim_sticky;
      if (sim_partition) client.partition_by_first_party = true;

      ServerPolicy server;
      server.lifetime_hint_s = sim_hint;
      server.accept_window_s = sim_window;
      server.reissue_on_resumption = !sim_no_reissue;

      auto in = open_input(sim_schedule);
      auto visits = sim::load_schedule_csv(in);
      sim::ScheduleResult result = sim::run_schedule(visits, client, server);
      std::ofstream out(sim_out);
      sim::write_linkage_csv(result, out);
      std::cerr << result.segments.size() << " linkage segments, longest "
                << result.longest_segment_ms() / 1000 << " s\n";
    } else if (*analyze_cmd) {
      metrics::VisitLog log = metrics::VisitLog::load_csv_file(an_log);
      fs::create_directories(an_out);
      auto write_out = [&](const std::string& name, auto&& writer) {
        std::ofstream out(fs::path(an_out) / name);
        writer(out);
      };
      if (an_metric == "revisit-cdf") {
        auto points = metrics::revisit_interval_cdf(log);
        write_out("revisit_cdf.csv",
                  [&](std::ostream& out) { metrics::write_cdf_csv(points, out); });
      } else {
        if (an_lifetimes.empty()) {
          throw std::runtime_error("--lifetimes is required for metric " + an_metric);
        }
        metrics::LifetimeGrid grid{parse_lifetime_list(an_lifetimes)};
        grid.validate();
        if (an_metric == "lctp") {
          metrics::LctpMaxCurves curves = metrics::lctp_max_curves(log, grid);
          write_out("lctp_mean.csv", [&](std::ostream& out) {
            metrics::write_curve_csv(grid, curves.mean_s, out);
          });
          write_out("lctp_median.csv", [&](std::ostream& out) {
            metrics::write_curve_csv(grid, curves.median_s, out);
          });
        } else if (an_metric == "permanent") {
          if (an_window_end <= an_window_start) {
            throw std::runtime_error("permanent metric needs --window-start/--window-end");
          }
          metrics::SampleWindow window{an_window_start, an_window_end};
          auto clipped = log.clipped(window);
          auto curve = metrics::trackable_share_curve(clipped, grid, window);
          write_out("trackable_share.csv", [&](std::ostream& out) {
            metrics::write_curve_csv(grid, curve, out);
          });
        } else if (an_metric == "rr") {
          auto curve = metrics::resumption_ratio_curve(log, grid);
          write_out("resumption_ratio.csv", [&](std::ostream& out) {
            metrics::write_curve_csv(grid, curve, out);
          });
        } else {
          throw std::runtime_error("unknown metric: " + an_metric);
        }
      }
    } else if (*ingest_cmd) {
      auto pseudo = logs::Pseudonymizer::from_key_file(ig_key);
      auto in = open_input(ig_in);
      std::ofstream out(ig_out);
      if (!out) throw std::runtime_error("cannot open output: " + ig_out);
      logs::IngestStats stats = logs::ingest_stream(in, pseudo, out);
      std::cerr << "kept " << stats.kept << ", dropped " << stats.dropped_query_type
                << " non-resolution, " << stats.malformed << " malformed\n";
    } else if (*synth_cmd) {
      nlohmann::json spec = nlohmann::json::parse(read_file(sy_spec));
      logs::SynthResult result = logs::synthesize(spec, sy_seed);
      fs::create_directories(sy_out);
      {
        std::ofstream out(fs::path(sy_out) / "visits.csv");
        result.write_visits_csv(out);
      }
      {
        std::ofstream out(fs::path(sy_out) / "manifest.json");
        out << result.manifest_json().dump(2) << '\n';
      }
      std::cerr << result.rows.size() << " visits, " << result.manifest.size()
                << " manifest entries\n";
    } else if (*report_cmd) {
      report::summarize(rp_in, rp_out);
    } else if (*fixture_cmd) {
      auto in = open_input(fx_config_file);
      fixture::FixtureConfig config = fixture::parse_fixture_config(in);
      auto fx = fixture::TlsFixture::spawn(config);
      std::cout << fx->address() << std::endl;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      while (!g_stop) real_clock()->sleep_ms(200);
      fx->shutdown();
      for (const auto& d : fx->decision_log()) {
        std::cerr << d.ts_ms << ' ' << (d.resumed ? "resumed" : "full") << ' ' << d.detail
                  << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
