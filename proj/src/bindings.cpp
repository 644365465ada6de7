#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "resumetrace/analyzer.hpp"
#include "resumetrace/mechmodel.hpp"
#include "resumetrace/scanner.hpp"
#include "resumetrace/tlssim.hpp"

namespace py = pybind11;

using namespace resumetrace;

namespace {

MechanismKind kind_arg(const std::string& name) {
  auto kind = mechanism_from_string(name);
  if (!kind) throw py::value_error("unknown mechanism kind: " + name);
  return *kind;
}

py::dict attributes_dict(const std::string& kind_name) {
  const MechanismAttributes& a = attributes_of(kind_arg(kind_name));
  py::dict d;
  d["server_stores_state"] = std::string(to_string(a.server_stores_state));
  d["rtt_delta_vs_full"] = a.rtt_delta_vs_full;
  d["identifier_plaintext_in_hello"] = a.identifier_plaintext_in_hello;
  d["identifier_reusable"] = a.identifier_reusable;
  d["forward_secrecy"] = std::string(to_string(a.forward_secrecy));
  d["recommended_lifetime_limit_s"] = a.recommended_lifetime_limit_s;
  d["limit_is_minimum"] = a.limit_is_minimum;
  return d;
}

metrics::VisitLog log_from_dict(
    const std::map<std::string, std::map<std::string, std::vector<std::int64_t>>>& visits) {
  metrics::VisitLog log;
  log.visits = visits;
  for (auto& [user, hosts] : log.visits) {
    for (auto& [host, times] : hosts) {
      std::sort(times.begin(), times.end());
      times.erase(std::unique(times.begin(), times.end()), times.end());
    }
  }
  return log;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "TLS session resumption tracking: mechanism model, simulator, metrics";

  // mechanism model
  m.def("mechanism_kinds", [] {
    std::vector<std::string> names;
    for (MechanismKind k : kAllMechanisms) names.emplace_back(to_string(k));
    return names;
  });
  m.def("attributes_of", &attributes_dict, py::arg("kind"));
  m.def(
      "effective_lifetime_s",
      [](const std::string& kind, std::optional<std::int64_t> hint_s, const ClientPolicy& policy) {
        ResumptionIdentifier id;
        id.kind = kind_arg(kind);
        id.token = "t";
        id.lifetime_hint_s = hint_s;
        return effective_lifetime_s(id, policy);
      },
      py::arg("kind"), py::arg("hint_s"), py::arg("policy"));

  py::class_<ClientPolicy>(m, "ClientPolicy")
      .def(py::init<>())
      .def_readwrite("sticky_expiry", &ClientPolicy::sticky_expiry)
      .def_readwrite("accept_reissued", &ClientPolicy::accept_reissued)
      .def_readwrite("partition_by_first_party", &ClientPolicy::partition_by_first_party)
      .def("set_lifetime_cap_s",
           [](ClientPolicy& p, const std::string& kind, std::int64_t cap) {
             p.lifetime_cap_s[kind_arg(kind)] = cap;
           })
      .def("lifetime_cap_s",
           [](const ClientPolicy& p, const std::string& kind) {
             return p.lifetime_cap_s[kind_arg(kind)];
           })
      .def("set_enabled",
           [](ClientPolicy& p, const std::string& kind, bool on) {
             p.resumption_enabled[kind_arg(kind)] = on;
           })
      .def("enabled", [](const ClientPolicy& p, const std::string& kind) {
        return p.enabled(kind_arg(kind));
      });

  py::class_<ServerPolicy>(m, "ServerPolicy")
      .def(py::init<>())
      .def_readwrite("lifetime_hint_s", &ServerPolicy::lifetime_hint_s)
      .def_readwrite("reissue_on_resumption", &ServerPolicy::reissue_on_resumption)
      .def_readwrite("accept_window_s", &ServerPolicy::accept_window_s)
      .def_readwrite("psk_batch_size", &ServerPolicy::psk_batch_size)
      .def("set_supports", [](ServerPolicy& p, const std::string& kind, bool on) {
        p.supports[kind_arg(kind)] = on;
      });

  // simulator
  py::class_<sim::LinkageSegment>(m, "LinkageSegment")
      .def_readonly("host", &sim::LinkageSegment::host)
      .def_readonly("profile_id", &sim::LinkageSegment::profile_id)
      .def_readonly("start_ms", &sim::LinkageSegment::start_ms)
      .def_readonly("end_ms", &sim::LinkageSegment::end_ms)
      .def_readonly("visit_count", &sim::LinkageSegment::visit_count)
      .def("__repr__", [](const sim::LinkageSegment& s) {
        return "<LinkageSegment " + s.host + " profile=" + std::to_string(s.profile_id) +
               " [" + std::to_string(s.start_ms) + "," + std::to_string(s.end_ms) + "] n=" +
               std::to_string(s.visit_count) + ">";
      });

  m.def(
      "run_schedule",
      [](const std::vector<std::tuple<std::int64_t, std::string, std::string>>& visits,
         const ClientPolicy& client, const ServerPolicy& server) {
        std::vector<sim::VisitEvent> events;
        events.reserve(visits.size());
        for (const auto& [ts, host, fp] : visits) events.push_back({ts, host, fp});
        return sim::run_schedule(events, client, server).segments;
      },
      py::arg("visits"), py::arg("client_policy"), py::arg("server_policy"));
  m.def("third_party_linkable", &sim::third_party_linkable, py::arg("client_policy"));

  // metrics
  m.def(
      "consecutive_ok",
      [](const std::vector<std::int64_t>& t, std::int64_t l) {
        return metrics::consecutive_ok(t, l);
      },
      py::arg("times_ms"), py::arg("lifetime_s"));
  m.def(
      "lctp_ms",
      [](const std::vector<std::int64_t>& t, std::int64_t l) { return metrics::lctp_ms(t, l); },
      py::arg("times_ms"), py::arg("lifetime_s"));
  m.def(
      "resumption_ratio",
      [](const std::vector<std::int64_t>& t, std::int64_t l) {
        return metrics::resumption_ratio(t, l);
      },
      py::arg("times_ms"), py::arg("lifetime_s"));
  m.def(
      "permanently_trackable",
      [](const std::vector<std::int64_t>& t, std::int64_t l, std::int64_t start_ms,
         std::int64_t end_ms) {
        return metrics::permanently_trackable(t, l, {start_ms, end_ms});
      },
      py::arg("times_ms"), py::arg("lifetime_s"), py::arg("window_start_ms"),
      py::arg("window_end_ms"));
  m.def(
      "lctp_max_ms",
      [](const std::map<std::string, std::vector<std::int64_t>>& by_host, std::int64_t l) {
        std::vector<metrics::VisitSequence> seqs;
        for (const auto& [host, times] : by_host) seqs.push_back({"u", host, times});
        return metrics::lctp_max_ms(seqs, l);
      },
      py::arg("visits_by_host"), py::arg("lifetime_s"));
  m.def(
      "trackable_share",
      [](const std::map<std::string, std::map<std::string, std::vector<std::int64_t>>>& visits,
         std::int64_t l, std::int64_t start_ms, std::int64_t end_ms) {
        return metrics::trackable_share(log_from_dict(visits), l, {start_ms, end_ms});
      },
      py::arg("visits"), py::arg("lifetime_s"), py::arg("window_start_ms"),
      py::arg("window_end_ms"));
  m.def(
      "revisit_interval_cdf",
      [](const std::map<std::string, std::map<std::string, std::vector<std::int64_t>>>& visits) {
        std::vector<std::pair<double, double>> out;
        for (const auto& p : metrics::revisit_interval_cdf(log_from_dict(visits))) {
          out.emplace_back(p.x, p.y);
        }
        return out;
      },
      py::arg("visits"));

  // scanner helpers that need no network
  m.def(
      "extract_stek_keyname",
      [](const py::bytes& ticket) {
        std::string t = ticket;
        return py::bytes(scan::extract_stek_keyname(t));
      },
      py::arg("ticket"));
  m.def(
      "estimate_stek_rotation",
      [](const std::vector<std::tuple<std::string, int, py::bytes>>& observations) {
        std::vector<scan::StekObservation> obs;
        obs.reserve(observations.size());
        for (const auto& [host, day, key] : observations) {
          obs.push_back({host, day, std::string(key)});
        }
        scan::RotationSummary summary = scan::estimate_stek_rotation(std::move(obs));
        std::map<std::string, std::pair<int, bool>> out;
        for (const auto& e : summary.per_host) {
          out[e.host] = {e.rotation_days, e.lower_bound};
        }
        return out;
      },
      py::arg("observations"));

#ifdef RESUMETRACE_VERSION
  m.attr("__version__") = RESUMETRACE_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
