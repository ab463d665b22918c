#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "nlgd/search.hpp"
#include "nlgd/training.hpp"

namespace nlgd {

inline constexpr const char* kRecordSchemaVersion = "1.0";
inline constexpr const char* kGridDivergedToken = "DIVERGED";

nlohmann::json run_record_to_json(const RunRecord& rec);
RunRecord run_record_from_json(const nlohmann::json& j);
nlohmann::json search_result_to_json(const SearchResult& result);
SearchResult search_result_from_json(const nlohmann::json& j);

// Append-only store: one JSON record per line in records.jsonl under dir,
// keyed by a content hash of the serialized record. Re-writing an existing
// key is a no-op, so the same result is never stored twice.
class RecordStore {
 public:
  explicit RecordStore(std::string dir);

  // Returns the content key; appends only if the key is new.
  std::string put_run(const RunRecord& rec);
  std::string put_search(const SearchResult& result);

  std::vector<std::string> keys() const;
  bool contains(const std::string& key) const;
  RunRecord get_run(const std::string& key) const;

  // All run records whose serialized fields match every filter entry
  // (top-level string/number equality, e.g. {"problem", "quadratic_deep"}).
  std::vector<RunRecord> query_runs(
      const std::map<std::string, std::string>& filter) const;

  const std::string& dir() const { return dir_; }

 private:
  std::string put_line(const std::string& kind, const nlohmann::json& body);
  void load();

  std::string dir_;
  std::string path_;
  std::map<std::string, std::string> lines_;  // key -> raw line
};

// FNV-1a 64-bit, rendered as 16 hex digits.
std::string content_hash(const std::string& payload);

struct SummaryRow {
  std::string problem;
  std::string optimizer;
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double nu = 1.0;
  double one_minus_rho = 1.0;
  bool metric_is_accuracy = false;
};

// Per (problem, optimizer) sample mean and std of the final test metric,
// with the selected nu and 1 - rho columns. Rows sorted by group key.
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records);

// Aligned fixed-width text table; "(no matching records)" when empty.
std::string render_summary_text(const std::vector<SummaryRow>& rows);
// Tab-separated, one header row.
std::string render_summary_tsv(const std::vector<SummaryRow>& rows);

// Tab-separated grid: header row of lr values, first column nu values,
// flagged cells emitted as kGridDivergedToken. Deterministic bytes.
std::string export_grid(const GridResult& grid);
GridResult parse_grid(const std::string& text);

}  // namespace nlgd
