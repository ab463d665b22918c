#include "nlgd/records.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

using nlohmann::json;

namespace nlgd {

namespace {

json schedule_to_json(const ScheduleSpec& s) {
  return json{
      {"kind", s.kind == ScheduleSpec::Kind::kConstant ? "constant"
                                                       : "annihilation"},
      {"base_lr", s.base_lr},
      {"total_epochs", s.total_epochs},
      {"annihilation_factor", s.annihilation_factor},
      {"annihilation_epochs", s.annihilation_epochs},
  };
}

ScheduleSpec schedule_from_json(const json& j) {
  ScheduleSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") {
    s.kind = ScheduleSpec::Kind::kConstant;
  } else if (kind == "annihilation") {
    s.kind = ScheduleSpec::Kind::kAnnihilation;
  } else {
    throw std::runtime_error("unknown schedule kind: " + kind);
  }
  s.base_lr = j.at("base_lr").get<double>();
  s.total_epochs = j.at("total_epochs").get<std::size_t>();
  s.annihilation_factor = j.at("annihilation_factor").get<double>();
  s.annihilation_epochs = j.at("annihilation_epochs").get<std::size_t>();
  return s;
}

json hyper_to_json(const HyperParams& hp) {
  json j{
      {"alpha", hp.alpha},
      {"nu", hp.nu},
      {"rho", hp.rho},
      {"lambda_prime", hp.lambda_prime},
      {"adam_beta1", hp.adam_beta1},
      {"adam_beta2", hp.adam_beta2},
      {"adam_eps", hp.adam_eps},
  };
  if (hp.clip_t) j["clip_t"] = *hp.clip_t;
  return j;
}

HyperParams hyper_from_json(const json& j) {
  HyperParams hp;
  hp.alpha = j.at("alpha").get<double>();
  hp.nu = j.at("nu").get<double>();
  hp.rho = j.at("rho").get<double>();
  hp.lambda_prime = j.at("lambda_prime").get<double>();
  hp.adam_beta1 = j.at("adam_beta1").get<double>();
  hp.adam_beta2 = j.at("adam_beta2").get<double>();
  hp.adam_eps = j.at("adam_eps").get<double>();
  if (j.contains("clip_t")) hp.clip_t = j.at("clip_t").get<double>();
  return hp;
}

void check_schema(const json& j) {
  const std::string version = j.at("schema").get<std::string>();
  const auto dotpos = version.find('.');
  const std::string major = version.substr(0, dotpos);
  const std::string ours(kRecordSchemaVersion);
  if (major != ours.substr(0, ours.find('.'))) {
    throw std::runtime_error("unsupported record schema version " + version +
                             " (reader supports major " +
                             ours.substr(0, ours.find('.')) + ")");
  }
}

}  // namespace

json run_record_to_json(const RunRecord& rec) {
  const RunConfig& cfg = rec.config;
  json j{
      {"schema", kRecordSchemaVersion},
      {"kind", "run"},
      {"problem", cfg.problem_id},
      {"problem_params", cfg.problem_params},
      {"problem_seed", cfg.problem_seed},
      {"optimizer", opt_kind_name(cfg.opt_kind)},
      {"hyper", hyper_to_json(cfg.hyper)},
      {"paper_lookahead_sign", cfg.opt_options.paper_lookahead_sign},
      {"couple_decay_to_lr", cfg.opt_options.couple_decay_to_lr},
      {"schedule", schedule_to_json(cfg.schedule)},
      {"batch_size", cfg.batch_size},
      {"batches_per_epoch", cfg.batches_per_epoch},
      {"seed", cfg.seed},
      {"train_loss", rec.train_loss},
      {"val_loss", rec.val_loss},
      {"val_accuracy", rec.val_accuracy},
      {"final_test_loss", rec.final_test_loss},
      {"final_test_accuracy", rec.final_test_accuracy},
      {"has_accuracy", rec.has_accuracy},
      {"diverged", rec.diverged},
      {"completed_epochs", rec.completed_epochs},
      {"wall_seconds", rec.wall_seconds},
  };
  return j;
}

RunRecord run_record_from_json(const json& j) {
  check_schema(j);
  RunRecord rec;
  RunConfig& cfg = rec.config;
  cfg.problem_id = j.at("problem").get<std::string>();
  cfg.problem_params =
      j.at("problem_params").get<std::map<std::string, double>>();
  cfg.problem_seed = j.at("problem_seed").get<std::uint64_t>();
  cfg.opt_kind = opt_kind_from_name(j.at("optimizer").get<std::string>());
  cfg.hyper = hyper_from_json(j.at("hyper"));
  cfg.opt_options.paper_lookahead_sign =
      j.at("paper_lookahead_sign").get<bool>();
  cfg.opt_options.couple_decay_to_lr = j.at("couple_decay_to_lr").get<bool>();
  cfg.schedule = schedule_from_json(j.at("schedule"));
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.batches_per_epoch = j.at("batches_per_epoch").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  rec.train_loss = j.at("train_loss").get<std::vector<double>>();
  rec.val_loss = j.at("val_loss").get<std::vector<double>>();
  rec.val_accuracy = j.at("val_accuracy").get<std::vector<double>>();
  rec.final_test_loss = j.at("final_test_loss").get<double>();
  rec.final_test_accuracy = j.at("final_test_accuracy").get<double>();
  rec.has_accuracy = j.at("has_accuracy").get<bool>();
  rec.diverged = j.at("diverged").get<bool>();
  rec.completed_epochs = j.at("completed_epochs").get<std::size_t>();
  rec.wall_seconds = j.at("wall_seconds").get<double>();
  return rec;
}

json search_result_to_json(const SearchResult& result) {
  json samples = json::array();
  for (const SearchSample& s : result.samples) {
    samples.push_back(json{
        {"hyper", hyper_to_json(s.hyper)},
        {"val_metric", s.val_metric},
        {"metric_is_accuracy", s.metric_is_accuracy},
        {"diverged", s.diverged},
    });
  }
  json finals = json::array();
  for (const RunRecord& rec : result.final_summary.records) {
    finals.push_back(run_record_to_json(rec));
  }
  return json{
      {"schema", kRecordSchemaVersion},
      {"kind", "search"},
      {"samples", samples},
      {"best_index", result.best_index},
      {"all_diverged", result.all_diverged},
      {"final_records", finals},
      {"final_mean", result.final_summary.mean},
      {"final_std", result.final_summary.stddev},
      {"final_diverged_count", result.final_summary.diverged_count},
      {"runs_executed", result.runs_executed},
  };
}

SearchResult search_result_from_json(const json& j) {
  check_schema(j);
  SearchResult result;
  for (const json& sj : j.at("samples")) {
    SearchSample s;
    s.hyper = hyper_from_json(sj.at("hyper"));
    s.val_metric = sj.at("val_metric").get<double>();
    s.metric_is_accuracy = sj.at("metric_is_accuracy").get<bool>();
    s.diverged = sj.at("diverged").get<bool>();
    result.samples.push_back(s);
  }
  result.best_index = j.at("best_index").get<std::size_t>();
  result.all_diverged = j.at("all_diverged").get<bool>();
  for (const json& rj : j.at("final_records")) {
    result.final_summary.records.push_back(run_record_from_json(rj));
  }
  result.final_summary.mean = j.at("final_mean").get<double>();
  result.final_summary.stddev = j.at("final_std").get<double>();
  result.final_summary.diverged_count =
      j.at("final_diverged_count").get<std::size_t>();
  result.runs_executed = j.at("runs_executed").get<std::size_t>();
  return result;
}

std::string content_hash(const std::string& payload) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return std::string(buf);
}

RecordStore::RecordStore(std::string dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  path_ = dir_ + "/records.jsonl";
  load();
}

void RecordStore::load() {
  std::ifstream in(path_);
  if (!in) return;  // empty store
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    lines_[j.at("key").get<std::string>()] = line;
  }
}

std::string RecordStore::put_line(const std::string& kind, const json& body) {
  // The key hashes the record content minus timing, so a replayed run
  // (identical metrics, different wall time) maps to the same entry.
  json hashable = body;
  hashable.erase("wall_seconds");
  if (hashable.contains("final_records")) {
    for (json& rj : hashable["final_records"]) rj.erase("wall_seconds");
  }
  const std::string key = kind + "-" + content_hash(hashable.dump());
  if (lines_.count(key)) return key;

  json wrapped = body;
  wrapped["key"] = key;
  const std::string line = wrapped.dump();
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to record store: " + path_);
  out << line << '\n';
  if (!out) throw std::runtime_error("write failed: " + path_);
  lines_[key] = line;
  return key;
}

std::string RecordStore::put_run(const RunRecord& rec) {
  return put_line("run", run_record_to_json(rec));
}

std::string RecordStore::put_search(const SearchResult& result) {
  return put_line("search", search_result_to_json(result));
}

std::vector<std::string> RecordStore::keys() const {
  std::vector<std::string> out;
  out.reserve(lines_.size());
  for (const auto& [key, _] : lines_) out.push_back(key);
  return out;
}

bool RecordStore::contains(const std::string& key) const {
  return lines_.count(key) != 0;
}

RunRecord RecordStore::get_run(const std::string& key) const {
  auto it = lines_.find(key);
  if (it == lines_.end()) {
    throw std::out_of_range("no such record key: " + key);
  }
  return run_record_from_json(json::parse(it->second));
}

std::vector<RunRecord> RecordStore::query_runs(
    const std::map<std::string, std::string>& filter) const {
  std::vector<RunRecord> out;
  for (const auto& [key, line] : lines_) {
    json j = json::parse(line);
    if (j.at("kind") != "run") continue;
    bool match = true;
    for (const auto& [field, want] : filter) {
      if (!j.contains(field)) {
        match = false;
        break;
      }
      const json& got = j.at(field);
      const std::string have = got.is_string() ? got.get<std::string>()
                                               : got.dump();
      if (have != want) {
        match = false;
        break;
      }
    }
    if (match) out.push_back(run_record_from_json(j));
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>>
      groups;
  for (const RunRecord& rec : records) {
    groups[{rec.config.problem_id, opt_kind_name(rec.config.opt_kind)}]
        .push_back(&rec);
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, members] : groups) {
    SummaryRow row;
    row.problem = key.first;
    row.optimizer = key.second;
    row.count = members.size();
    std::vector<double> finals;
    for (const RunRecord* rec : members) {
      finals.push_back(rec->has_accuracy ? rec->final_test_accuracy
                                         : rec->final_test_loss);
    }
    row.mean = sample_mean(finals);
    row.stddev = sample_std(finals);
    row.nu = members.front()->config.hyper.nu;
    row.one_minus_rho = 1.0 - members.front()->config.hyper.rho;
    row.metric_is_accuracy = members.front()->has_accuracy;
    rows.push_back(row);
  }
  return rows;
}

std::string render_summary_text(const std::vector<SummaryRow>& rows) {
  if (rows.empty()) return "(no matching records)\n";
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %-12s %5s %18s %6s %6s\n", "problem",
                "optimizer", "n", "metric", "nu", "1-rho");
  out << buf;
  for (const SummaryRow& r : rows) {
    char metric[48];
    std::snprintf(metric, sizeof(metric), "%.2f +/- %.2f", r.mean, r.stddev);
    std::snprintf(buf, sizeof(buf), "%-16s %-12s %5zu %18s %6.2f %6.2f\n",
                  r.problem.c_str(), r.optimizer.c_str(), r.count, metric, r.nu,
                  r.one_minus_rho);
    out << buf;
  }
  return out.str();
}

std::string render_summary_tsv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "problem\toptimizer\tn\tmean\tstd\tnu\tone_minus_rho\tmetric\n";
  char buf[128];
  for (const SummaryRow& r : rows) {
    out << r.problem << '\t' << r.optimizer << '\t' << r.count << '\t';
    std::snprintf(buf, sizeof(buf), "%.17g\t%.17g\t%g\t%g", r.mean, r.stddev,
                  r.nu, r.one_minus_rho);
    out << buf << '\t' << (r.metric_is_accuracy ? "accuracy" : "loss") << '\n';
  }
  return out.str();
}

std::string export_grid(const GridResult& grid) {
  std::ostringstream out;
  char buf[64];
  out << "nu\\lr";
  for (double lr : grid.lr_values) {
    std::snprintf(buf, sizeof(buf), "\t%.17g", lr);
    out << buf;
  }
  out << '\n';
  for (std::size_t r = 0; r < grid.nu_values.size(); ++r) {
    std::snprintf(buf, sizeof(buf), "%.17g", grid.nu_values[r]);
    out << buf;
    for (std::size_t c = 0; c < grid.lr_values.size(); ++c) {
      if (grid.flagged[r][c]) {
        out << '\t' << kGridDivergedToken;
      } else {
        std::snprintf(buf, sizeof(buf), "\t%.17g", grid.mean_metric[r][c]);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

GridResult parse_grid(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parse_grid: empty input");

  auto split_tabs = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const std::size_t tab = s.find('\t', pos);
      cells.push_back(s.substr(pos, tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    return cells;
  };

  GridResult grid;
  const auto header = split_tabs(line);
  if (header.empty() || header[0] != "nu\\lr") {
    throw std::runtime_error("parse_grid: bad header");
  }
  for (std::size_t i = 1; i < header.size(); ++i) {
    grid.lr_values.push_back(std::stod(header[i]));
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    if (cells.size() != grid.lr_values.size() + 1) {
      throw std::runtime_error("parse_grid: ragged row");
    }
    grid.nu_values.push_back(std::stod(cells[0]));
    std::vector<double> row;
    std::vector<bool> flags;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i] == kGridDivergedToken) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        flags.push_back(true);
      } else {
        row.push_back(std::stod(cells[i]));
        flags.push_back(false);
      }
    }
    grid.mean_metric.push_back(std::move(row));
    grid.flagged.push_back(std::move(flags));
  }
  return grid;
}

}  // namespace nlgd
