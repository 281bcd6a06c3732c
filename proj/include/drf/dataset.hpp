#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drf/binary_io.hpp"
#include "drf/common.hpp"

namespace drf {

struct ColumnInfo {
  std::string name;     // encoded column name ("x3" or "setting=urban")
  bool one_hot = false;
  std::string parent;   // original factor column, when one_hot
  std::string level;    // factor level, when one_hot
};

// Numeric predictor/response matrices after encoding. Immutable by
// convention once built; every consumer takes const references.
struct Dataset {
  Eigen::MatrixXd x;  // n x p
  Eigen::MatrixXd y;  // n x d
  std::vector<ColumnInfo> predictors;
  std::vector<std::string> responses;

  int n() const { return static_cast<int>(x.rows()); }
  int p() const { return static_cast<int>(x.cols()); }
  int d() const { return static_cast<int>(y.cols()); }

  void validate() const {
    if (x.rows() != y.rows()) throw DataError("predictor/response row mismatch");
    if (n() < 2 || p() < 1 || d() < 1)
      throw DataError("dataset too small: need n >= 2, p >= 1, d >= 1");
    if (!x.allFinite() || !y.allFinite())
      throw DataError("dataset contains non-finite values");
  }
};

inline Dataset subset_rows(const Dataset& ds, const std::vector<int>& rows) {
  Dataset out;
  out.predictors = ds.predictors;
  out.responses = ds.responses;
  out.x.resize(static_cast<int>(rows.size()), ds.p());
  out.y.resize(static_cast<int>(rows.size()), ds.d());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    out.x.row(i) = ds.x.row(rows[i]);
    out.y.row(i) = ds.y.row(rows[i]);
  }
  return out;
}

enum class MissingPolicy { Error, DropRow };

struct IngestOptions {
  std::vector<std::string> na_tokens = {"", "NA", "NaN"};
  MissingPolicy missing = MissingPolicy::Error;
};

struct LoadResult {
  Dataset data;
  std::size_t dropped_rows = 0;
};

namespace detail {

// RFC-4180 parser: quoted fields, doubled-quote escapes, embedded
// commas/newlines, CRLF or LF records. Throws with 1-based row/column.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;

  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted)
          throw DataError("CSV parse error at line " + std::to_string(line) +
                          ": quote inside unquoted field");
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;  // swallow CR of CRLF
        [[fallthrough]];
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes)
    throw DataError("CSV parse error: unterminated quoted field starting before line " +
                    std::to_string(line));
  if (!field.empty() || !row.empty() || field_was_quoted) end_record();
  return records;
}

inline bool parse_double(const std::string& s, double* out) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t') ++end;
  if (*end != '\0') return false;
  *out = v;
  return true;
}

}  // namespace detail

// CSV ingestion with one-hot encoding of factor predictors. Column order is
// deterministic: original file order, factor levels sorted lexicographically.
inline LoadResult load_csv(const std::string& path,
                           const std::vector<std::string>& response_cols,
                           const IngestOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  auto records = detail::parse_csv(buf.str());
  if (records.size() < 2) throw DataError(path + ": need a header row and at least one data row");

  const std::vector<std::string>& header = records[0];
  const std::size_t ncol = header.size();
  for (const auto& rec : records)
    if (rec.size() != ncol)
      throw DataError(path + ": ragged row with " + std::to_string(rec.size()) +
                      " fields, header has " + std::to_string(ncol));

  std::set<std::string> response_set(response_cols.begin(), response_cols.end());
  if (response_set.size() != response_cols.size())
    throw DataError("duplicate column in response list");
  for (const auto& rc : response_cols)
    if (std::find(header.begin(), header.end(), rc) == header.end())
      throw DataError("response column '" + rc + "' not found in " + path);
  if (response_cols.empty()) throw DataError("no response columns given");
  if (response_set.size() == ncol) throw DataError("no predictor columns remain");

  auto is_na = [&](const std::string& cell) {
    return std::find(options.na_tokens.begin(), options.na_tokens.end(), cell) !=
           options.na_tokens.end();
  };

  for (std::size_t c = 0; c < ncol; ++c) {
    bool all_missing = true;
    for (std::size_t r = 1; r < records.size() && all_missing; ++r)
      all_missing = is_na(records[r][c]);
    if (all_missing)
      throw DataError(path + ": column '" + header[c] + "' is entirely missing");
  }

  // Missing-value pass: drop or reject rows, keeping 1-based locations for messages.
  std::vector<std::size_t> kept;
  std::size_t dropped = 0;
  for (std::size_t r = 1; r < records.size(); ++r) {
    int na_col = -1;
    for (std::size_t c = 0; c < ncol; ++c) {
      if (is_na(records[r][c])) {
        na_col = static_cast<int>(c);
        break;
      }
    }
    if (na_col < 0) {
      kept.push_back(r);
    } else if (options.missing == MissingPolicy::Error) {
      throw DataError(path + ": missing value at row " + std::to_string(r + 1) +
                      ", column '" + header[na_col] + "'");
    } else {
      ++dropped;
    }
  }
  if (kept.size() < 2) throw DataError(path + ": fewer than 2 complete rows");

  // Column typing: numeric iff every kept cell parses as a double.
  std::vector<bool> numeric(ncol, true);
  for (std::size_t c = 0; c < ncol; ++c) {
    double v;
    for (std::size_t r : kept) {
      if (!detail::parse_double(records[r][c], &v)) {
        numeric[c] = false;
        break;
      }
    }
  }

  const int n = static_cast<int>(kept.size());
  Dataset ds;

  for (const auto& rc : response_cols) {
    std::size_t c = static_cast<std::size_t>(
        std::find(header.begin(), header.end(), rc) - header.begin());
    if (!numeric[c])
      throw DataError("response column '" + rc + "' is categorical; responses must be numeric");
    ds.responses.push_back(rc);
  }
  ds.y.resize(n, static_cast<int>(response_cols.size()));
  for (int j = 0; j < static_cast<int>(response_cols.size()); ++j) {
    std::size_t c = static_cast<std::size_t>(
        std::find(header.begin(), header.end(), response_cols[j]) - header.begin());
    for (int i = 0; i < n; ++i) {
      double v;
      detail::parse_double(records[kept[i]][c], &v);
      ds.y(i, j) = v;
    }
  }

  // Predictor encoding.
  std::vector<Eigen::VectorXd> x_cols;
  for (std::size_t c = 0; c < ncol; ++c) {
    if (response_set.count(header[c])) continue;
    if (numeric[c]) {
      Eigen::VectorXd col(n);
      for (int i = 0; i < n; ++i) {
        double v;
        detail::parse_double(records[kept[i]][c], &v);
        col[i] = v;
      }
      x_cols.push_back(std::move(col));
      ds.predictors.push_back({header[c], false, "", ""});
    } else {
      std::set<std::string> levels;
      for (int i = 0; i < n; ++i) levels.insert(records[kept[i]][c]);
      for (const auto& level : levels) {  // std::set iterates lexicographically
        Eigen::VectorXd col(n);
        for (int i = 0; i < n; ++i)
          col[i] = records[kept[i]][c] == level ? 1.0 : 0.0;
        x_cols.push_back(std::move(col));
        ds.predictors.push_back({header[c] + "=" + level, true, header[c], level});
      }
    }
  }
  if (x_cols.empty()) throw DataError("no predictor columns remain");

  ds.x.resize(n, static_cast<int>(x_cols.size()));
  for (int j = 0; j < static_cast<int>(x_cols.size()); ++j) ds.x.col(j) = x_cols[j];
  ds.validate();
  return {std::move(ds), dropped};
}

// Per-column location/scale used only inside split-criterion evaluation.
// Center = mean, scale = sample sd (n-1); constant columns get scale 1.
class ResponseScaler {
 public:
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  static ResponseScaler fit(const Eigen::MatrixXd& y) {
    if (y.rows() < 2) throw DataError("scaler needs at least 2 rows");
    ResponseScaler s;
    const int d = static_cast<int>(y.cols());
    s.center.resize(d);
    s.scale.resize(d);
    for (int j = 0; j < d; ++j) {
      double mean = y.col(j).mean();
      double ss = (y.col(j).array() - mean).square().sum();
      double sd = std::sqrt(ss / static_cast<double>(y.rows() - 1));
      s.center[j] = mean;
      s.scale[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& y) const {
    return (y.rowwise() - center.transpose()).array().rowwise() /
           scale.transpose().array();
  }

  Eigen::MatrixXd inverse(const Eigen::MatrixXd& z) const {
    return (z.array().rowwise() * scale.transpose().array()).matrix().rowwise() +
           center.transpose();
  }
};

// --- dataset serialization -------------------------------------------------
// Versioned JSON header (column metadata) + row-major f64 LE blocks for x, y.

inline std::string serialize_dataset(const Dataset& ds) {
  nlohmann::ordered_json header;
  header["format"] = "drf-dataset";
  header["version"] = 1;
  header["n"] = ds.n();
  header["p"] = ds.p();
  header["d"] = ds.d();
  auto cols = nlohmann::ordered_json::array();
  for (const auto& c : ds.predictors) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["one_hot"] = c.one_hot;
    if (c.one_hot) {
      jc["parent"] = c.parent;
      jc["level"] = c.level;
    }
    cols.push_back(jc);
  }
  header["predictors"] = cols;
  header["responses"] = ds.responses;

  std::string out;
  const std::string hdr = header.dump();
  put_u64(out, hdr.size());
  out += hdr;
  for (int i = 0; i < ds.n(); ++i)
    for (int j = 0; j < ds.p(); ++j) put_f64(out, ds.x(i, j));
  for (int i = 0; i < ds.n(); ++i)
    for (int j = 0; j < ds.d(); ++j) put_f64(out, ds.y(i, j));
  return out;
}

inline Dataset deserialize_dataset(const std::string& bytes) {
  ByteReader r(bytes, "dataset");
  const std::uint64_t hdr_len = r.u64();
  nlohmann::json header = nlohmann::json::parse(r.raw(hdr_len));
  if (header.value("format", "") != "drf-dataset")
    throw IoError("not a dataset file");
  if (header.value("version", 0) != 1)
    throw IoError("unsupported dataset version " + std::to_string(header.value("version", 0)));
  Dataset ds;
  const int n = header["n"], p = header["p"], d = header["d"];
  for (const auto& jc : header["predictors"]) {
    ColumnInfo c;
    c.name = jc["name"];
    c.one_hot = jc["one_hot"];
    if (c.one_hot) {
      c.parent = jc["parent"];
      c.level = jc["level"];
    }
    ds.predictors.push_back(c);
  }
  ds.responses = header["responses"].get<std::vector<std::string>>();
  ds.x.resize(n, p);
  ds.y.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) ds.x(i, j) = r.f64();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ds.y(i, j) = r.f64();
  ds.validate();
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::string bytes = serialize_dataset(ds);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_dataset(buf.str());
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t j = 0; j < ds.predictors.size(); ++j)
    out << (j ? "," : "") << ds.predictors[j].name;
  for (const auto& rn : ds.responses) out << "," << rn;
  out << "\n";
  out.precision(17);
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.p(); ++j) out << (j ? "," : "") << ds.x(i, j);
    for (int j = 0; j < ds.d(); ++j) out << "," << ds.y(i, j);
    out << "\n";
  }
}

}  // namespace drf
