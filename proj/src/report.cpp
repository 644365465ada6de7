#include "resumetrace/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "resumetrace/util.hpp"

namespace fs = std::filesystem;

namespace resumetrace::report {

namespace {
constexpr std::string_view kToolVersion = "0.1.0";
}

void CurveSeries::validate() const {
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].x <= points[i - 1].x) {
      throw std::invalid_argument("curve x values must be strictly ascending: " + label);
    }
  }
}

void CurveSeries::validate_cdf() const {
  validate();
  double prev = 0.0;
  for (const CurvePoint& p : points) {
    if (p.y < prev) throw std::invalid_argument("CDF must be nondecreasing: " + label);
    prev = p.y;
  }
  if (!points.empty() && points.back().y > 1.0 + 1e-12) {
    throw std::invalid_argument("CDF exceeds 1: " + label);
  }
}

CurveSeries empirical_cdf(std::string label, std::vector<double> values, std::string x_unit) {
  CurveSeries series;
  series.label = std::move(label);
  series.x_unit = std::move(x_unit);
  series.y_unit = "fraction";
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j + 1 < values.size() && values[j + 1] == values[i]) ++j;
    series.points.push_back({values[i], static_cast<double>(j + 1) / n});
    i = j + 1;
  }
  series.validate_cdf();
  return series;
}

std::vector<CurveSeries> build_lifetime_cdfs(const std::vector<scan::ScanProbeResult>& probes,
                                             const std::vector<MeasuredLifetime>& measured) {
  std::vector<CurveSeries> out;

  std::vector<double> hints;
  std::size_t zero_hints = 0;
  for (const auto& p : probes) {
    if (!p.ticket_supported || !p.ticket_lifetime_hint_s) continue;
    hints.push_back(static_cast<double>(*p.ticket_lifetime_hint_s));
    if (*p.ticket_lifetime_hint_s == 0) ++zero_hints;
  }
  if (!hints.empty()) {
    out.push_back(empirical_cdf("ticket_hint", hints, "seconds"));
    // Zero-second hints effectively disable resumption; surfaced as their
    // own bucket rather than silently folded into the distribution.
    CurveSeries erroneous;
    erroneous.label = "ticket_hint_erroneous";
    erroneous.x_unit = "seconds";
    erroneous.y_unit = "fraction";
    erroneous.points.push_back(
        {0.0, static_cast<double>(zero_hints) / static_cast<double>(hints.size())});
    out.push_back(std::move(erroneous));
  }

  for (MechanismKind kind : {MechanismKind::SessionTicket, MechanismKind::SessionId}) {
    std::vector<double> los;
    for (const auto& m : measured) {
      if (m.kind == kind) los.push_back(static_cast<double>(m.lo_s));
    }
    if (!los.empty()) {
      out.push_back(empirical_cdf(std::string(to_string(kind)) + "_measured", los, "seconds"));
    }
  }
  return out;
}

CurveSeries build_stek_histogram(const scan::RotationSummary& rotations) {
  CurveSeries series;
  series.label = "stek_rotation_histogram";
  series.x_unit = "days";
  series.y_unit = "hosts";
  for (const auto& [days, count] : rotations.histogram_days) {
    series.points.push_back({static_cast<double>(days), static_cast<double>(count)});
  }
  series.validate();
  return series;
}

void write_series_csv(const CurveSeries& series, std::ostream& out) {
  out << "# label=" << series.label << " x_unit=" << series.x_unit
      << " y_unit=" << series.y_unit << '\n';
  out << "x,y\n";
  for (const CurvePoint& p : series.points) out << p.x << ',' << p.y << '\n';
}

std::vector<MeasuredLifetime> load_lifetime_csv(std::istream& in) {
  std::vector<MeasuredLifetime> out;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto fields = split(sv, ',');
    if (fields.size() != 4) throw std::invalid_argument("lifetime line needs 4 fields");
    if (fields[0] == "host") continue;
    MeasuredLifetime m;
    m.host = fields[0];
    auto kind = mechanism_from_string(trim(fields[1]));
    if (!kind) throw std::invalid_argument("unknown mechanism: " + fields[1]);
    m.kind = *kind;
    m.lo_s = parse_i64(fields[2]);
    std::string_view hi = trim(fields[3]);
    if (hi != "inf" && !hi.empty()) m.hi_s = parse_i64(hi);
    out.push_back(std::move(m));
  }
  return out;
}

scan::RotationSummary load_rotation_csv(std::istream& in) {
  scan::RotationSummary summary;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto fields = split(sv, ',');
    if (fields.size() != 3) throw std::invalid_argument("rotation line needs 3 fields");
    if (fields[0] == "host") continue;
    scan::RotationEstimate e;
    e.host = fields[0];
    e.rotation_days = static_cast<int>(parse_i64(fields[1]));
    e.lower_bound = trim(fields[2]) == "true" || trim(fields[2]) == "1";
    summary.histogram_days[e.rotation_days]++;
    summary.per_host.push_back(std::move(e));
  }
  std::sort(summary.per_host.begin(), summary.per_host.end(),
            [](const auto& a, const auto& b) { return a.host < b.host; });
  return summary;
}

namespace {

const std::vector<std::string> kMetricCurveFiles = {
    "lctp_mean.csv",   "lctp_median.csv",      "trackable_share.csv",
    "resumption_ratio.csv", "revisit_cdf.csv",
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string render_series(const CurveSeries& series) {
  std::ostringstream buf;
  write_series_csv(series, buf);
  return buf.str();
}

}  // namespace

void summarize(const std::string& in_dir, const std::string& out_dir) {
  fs::create_directories(out_dir);

  nlohmann::json provenance;
  provenance["tool_version"] = std::string(kToolVersion);
  provenance["inputs"] = nlohmann::json::object();

  std::ostringstream summary;
  summary << "resumetrace summary\n===================\n\n";

  std::vector<std::string> notices;

  auto input_path = [&](const std::string& name) { return fs::path(in_dir) / name; };
  auto record_input = [&](const std::string& name) {
    provenance["inputs"][name] = sha256_hex(read_file(input_path(name).string()));
  };

  // Probe records ------------------------------------------------------------
  std::vector<scan::ScanProbeResult> probes;
  if (fs::exists(input_path("probes.jsonl"))) {
    record_input("probes.jsonl");
    std::ifstream in(input_path("probes.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      probes.push_back(scan::ScanProbeResult::from_json(nlohmann::json::parse(line)));
    }
    std::size_t tls_ok = 0, sid = 0, ticket = 0, zero_hint = 0;
    for (const auto& p : probes) {
      tls_ok += p.tls_ok;
      sid += p.session_id_supported;
      ticket += p.ticket_supported;
      zero_hint += p.ticket_supported && p.ticket_lifetime_hint_s &&
                   *p.ticket_lifetime_hint_s == 0;
    }
    summary << "[resumption support]\n"
            << "hosts probed: " << probes.size() << "\n"
            << "tls reachable: " << tls_ok << "\n"
            << "session id support: " << sid << "\n"
            << "session ticket support: " << ticket << "\n"
            << "erroneous zero-second hints: " << zero_hint << "\n\n";
  } else {
    notices.push_back("probes.jsonl missing; support and hint sections omitted");
  }

  // Measured lifetimes ---------------------------------------------------------
  std::vector<MeasuredLifetime> measured;
  if (fs::exists(input_path("lifetime.csv"))) {
    record_input("lifetime.csv");
    std::ifstream in(input_path("lifetime.csv"));
    measured = load_lifetime_csv(in);
  } else {
    notices.push_back("lifetime.csv missing; measured-lifetime CDFs omitted");
  }

  auto cdfs = build_lifetime_cdfs(probes, measured);
  if (!cdfs.empty()) {
    summary << "[lifetime cdfs]\n";
    for (const CurveSeries& s : cdfs) {
      write_file(fs::path(out_dir) / (s.label + ".csv"), render_series(s));
      summary << s.label << ": " << s.points.size() << " bucket edges;";
      summary << " x:";
      for (const CurvePoint& p : s.points) summary << ' ' << p.x;
      summary << "\n";
    }
    summary << "\n";
  }

  // STEK rotation ---------------------------------------------------------------
  if (fs::exists(input_path("stek.csv"))) {
    record_input("stek.csv");
    std::ifstream in(input_path("stek.csv"));
    scan::RotationSummary rotations = load_rotation_csv(in);
    CurveSeries hist = build_stek_histogram(rotations);
    write_file(fs::path(out_dir) / "stek_rotation_histogram.csv", render_series(hist));
    std::size_t lb = 0;
    for (const auto& e : rotations.per_host) lb += e.lower_bound;
    summary << "[stek rotation]\n"
            << "hosts: " << rotations.per_host.size() << "\n"
            << "lower-bound estimates (rotation 1, possibly non-RFC layout): " << lb << "\n\n";
  } else {
    notices.push_back("stek.csv missing; rotation histogram omitted");
  }

  // Tracking metric curves (pass-through) ----------------------------------------
  std::vector<std::string> copied;
  for (const std::string& name : kMetricCurveFiles) {
    if (fs::exists(input_path(name))) {
      record_input(name);
      write_file(fs::path(out_dir) / name, read_file(input_path(name).string()));
      copied.push_back(name);
    } else {
      notices.push_back(name + " missing; section omitted");
    }
  }
  if (!copied.empty()) {
    summary << "[tracking metrics]\n";
    for (const std::string& name : copied) summary << "included: " << name << "\n";
    summary << "note: DNS-derived visit logs understate revisits (client caching); "
               "metric results are lower bounds\n\n";
  }

  if (!notices.empty()) {
    summary << "[notices]\n";
    for (const std::string& n : notices) summary << n << "\n";
    summary << "\n";
  }

  write_file(fs::path(out_dir) / "provenance.json", provenance.dump(2) + "\n");
  write_file(fs::path(out_dir) / "summary.txt", summary.str());
}

}  // namespace resumetrace::report
