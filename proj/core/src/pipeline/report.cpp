#include "habi/pipeline/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "habi/errors.hpp"
#include "habi/pipeline/stages.hpp"

namespace habi::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMissing = "MISSING";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.push_back(line.substr(pos, next - pos));
    if (next == std::string::npos) return out;
    pos = next + 1;
  }
}

double to_double(const std::string& s, const fs::path& file) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw FormatError(file.string() + ": bad number '" + s + "'");
  }
  return v;
}

// Rows of a CSV keyed by header names. FormatError when a named column is absent.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path,
                                                         const std::vector<std::string>& needed) {
  std::ifstream f(path);
  std::string line;
  if (!f || !std::getline(f, line)) throw FormatError(path.string() + ": empty or unreadable");
  const auto header = split(line, ',');
  for (const auto& n : needed) {
    if (std::find(header.begin(), header.end(), n) == header.end()) {
      throw FormatError(path.string() + ": missing column " + n);
    }
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw FormatError(path.string() + ": ragged row");
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<fs::path> latest_or_none(const fs::path& out, Stage stage, const char* file) {
  try {
    return require_artifact(out, stage, file);
  } catch (const MissingArtifact&) {
    return std::nullopt;
  }
}

// N of an "hi_n<N>" id, if it is one.
std::optional<int> hi_candidates(const std::string& id) {
  if (id.rfind("hi_n", 0) != 0 || id.size() == 4) return std::nullopt;
  int n = 0;
  const auto r = std::from_chars(id.data() + 4, id.data() + id.size(), n);
  if (r.ec != std::errc{} || r.ptr != id.data() + id.size()) return std::nullopt;
  return n;
}

std::string label_for(const std::string& id) {
  if (id == kTeacherId) return "Teacher";
  if (id == kNoCriticId) return "HI w/o critic";
  if (id == kDistillId) return "Direct distill";
  if (const auto n = hi_candidates(id)) return "HI(N=" + std::to_string(*n) + ")";
  return id;
}

// Shortest text that parses back to the same double.
std::string exact(const std::optional<double>& v) {
  if (!v) return kMissing;
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, r.ptr);
}

std::string num(const std::optional<double>& v, int precision) {
  if (!v) return kMissing;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, *v);
  return buf;
}

}  // namespace

ComparisonReport assemble_report(const fs::path& out, const std::vector<int>& candidates) {
  ComparisonReport report;
  const auto eval_path = latest_or_none(out, Stage::kEval, kEvalFile);
  const auto bench_path = latest_or_none(out, Stage::kBench, kBenchFile);

  std::set<int> ns(candidates.begin(), candidates.end());
  std::vector<std::map<std::string, std::string>> eval_rows, bench_rows;
  if (eval_path) {
    eval_rows = read_csv(*eval_path, {"policy", "train_seed", "n_candidates", "episodes",
                                      "normalized_score", "normalized_stderr"});
    report.eval_dir = eval_path->parent_path().string();
  }
  if (bench_path) {
    bench_rows = read_csv(*bench_path, {"policy", "hz"});
    report.bench_dir = bench_path->parent_path().string();
  }
  for (const auto* rows : {&eval_rows, &bench_rows}) {
    for (const auto& r : *rows) {
      if (const auto n = hi_candidates(r.at("policy"))) ns.insert(*n);
    }
  }

  std::vector<std::string> ids{kTeacherId};
  for (int n : ns) ids.push_back(hi_policy_id(n));
  ids.push_back(kNoCriticId);
  ids.push_back(kDistillId);

  std::optional<double> teacher_hz;
  for (const auto& r : bench_rows) {
    if (r.at("policy") == kTeacherId) teacher_hz = to_double(r.at("hz"), *bench_path);
  }

  for (const auto& id : ids) {
    ReportRow row;
    row.policy = id;
    row.label = label_for(id);
    double sum = 0.0, var = 0.0;
    int k = 0;
    for (const auto& r : eval_rows) {
      if (r.at("policy") != id) continue;
      sum += to_double(r.at("normalized_score"), *eval_path);
      const double se = to_double(r.at("normalized_stderr"), *eval_path);
      var += se * se;
      row.episodes = std::stoi(r.at("episodes"));
      if (!row.training_seeds.empty()) row.training_seeds += ";";
      row.training_seeds += r.at("train_seed");
      ++k;
    }
    if (k > 0) {
      row.score = sum / k;
      row.stderr_score = std::sqrt(var) / k;
      row.score_source = eval_path->string();
      row.episode_seeds = (eval_path->parent_path() / "episode_seeds.txt").string();
    }
    for (const auto& r : bench_rows) {
      if (r.at("policy") != id) continue;
      row.hz = to_double(r.at("hz"), *bench_path);
      row.hz_source = bench_path->string();
      if (teacher_hz && *teacher_hz > 0.0) row.speedup = *row.hz / *teacher_hz;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string report_csv(const ComparisonReport& report) {
  auto or_missing = [](const std::string& s) { return s.empty() ? std::string(kMissing) : s; };
  std::string out =
      "policy,label,normalized_score,stderr,episodes,training_seeds,episode_seeds,hz,"
      "speedup_vs_teacher,score_source,hz_source\n";
  for (const auto& r : report.rows) {
    out += r.policy + "," + r.label + "," + exact(r.score) + "," + exact(r.stderr_score) + "," +
           (r.score ? std::to_string(r.episodes) : std::string(kMissing)) + "," +
           or_missing(r.training_seeds) + "," + or_missing(r.episode_seeds) + "," +
           exact(r.hz) + "," + exact(r.speedup) + "," + or_missing(r.score_source) + "," +
           or_missing(r.hz_source) + "\n";
  }
  return out;
}

std::string report_text(const ComparisonReport& report) {
  std::vector<std::vector<std::string>> table;
  table.push_back({""});
  table.push_back({"Performance"});
  table.push_back({"Frequency (Hz)"});
  table.push_back({"Speedup"});
  for (const auto& r : report.rows) {
    table[0].push_back(r.label);
    table[1].push_back(r.score ? num(r.score, 4) + " +- " + num(r.stderr_score, 2) : kMissing);
    table[2].push_back(num(r.hz, 5));
    table[3].push_back(r.speedup ? num(r.speedup, 4) + "x" : kMissing);
  }
  std::vector<std::size_t> width(table[0].size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::string out;
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        out += line[c] + std::string(width[c] - line[c].size(), ' ');
      } else {
        out += "  " + std::string(width[c] - line[c].size(), ' ') + line[c];
      }
    }
    out += "\n";
  }
  out += "eval: " + (report.eval_dir.empty() ? std::string(kMissing) : report.eval_dir) + "\n";
  out += "bench: " + (report.bench_dir.empty() ? std::string(kMissing) : report.bench_dir) + "\n";
  return out;
}

}  // namespace habi::pipeline
