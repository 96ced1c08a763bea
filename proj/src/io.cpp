#include "iifpca/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "iifpca/error.hpp"

namespace iifpca {

namespace {

/// Splits one CSV line; double quotes group a field and "" is a literal quote.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

bool parse_double(const std::string& s, double& x) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), x);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct Table {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  Table t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!have_header) {
      if (line.empty()) continue;
      t.header = split_csv(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    t.rows.push_back(split_csv(line));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw DataError(path + ": missing header row");
  return t;
}

int column(const Table& t, const std::string& name) {
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (t.header[c] == name) return static_cast<int>(c);
  throw DataError(t.path + ": missing column '" + name + "'");
}

std::string at(const Table& t, std::size_t r) { return t.path + ":" + std::to_string(t.line_numbers[r]) + ": "; }

std::string append_provenance(const std::map<std::string, std::string>& meta, const std::string& key,
                              const std::string& step) {
  const auto it = meta.find(key);
  if (it == meta.end() || it->second.empty() || it->second == "identity") return step;
  if (step == "identity") return it->second;
  return it->second + "," + step;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (const char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

LongitudinalDataset load_csv(const std::string& outcome_path, const std::string& covariate_path,
                             const std::optional<std::string>& followup_path, const CsvSchema& schema,
                             LoadReport* report) {
  const Table out = read_table(outcome_path);
  const Table cov = read_table(covariate_path);
  std::optional<Table> fol;
  if (followup_path) fol = read_table(*followup_path);

  std::vector<std::string> violations;
  std::vector<Subject> subjects;
  std::map<std::string, std::size_t> index;
  auto subject = [&](const std::string& id) -> Subject& {
    auto [it, inserted] = index.emplace(id, subjects.size());
    if (inserted) subjects.push_back(Subject{id, 0.0, {}, {}});
    return subjects[it->second];
  };
  // Row of the last record seen per subject, for ordering messages.
  std::map<std::string, std::size_t> last_out_row, last_cov_row;

  const int o_id = column(out, schema.subject_column);
  const int o_t = column(out, schema.time_column);
  const int o_x = column(out, schema.value_column);
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    const auto& row = out.rows[r];
    if (row.size() != out.header.size()) {
      violations.push_back(at(out, r) + "expected " + std::to_string(out.header.size()) + " fields, found " +
                           std::to_string(row.size()));
      continue;
    }
    const std::string& id = row[o_id];
    double t = 0.0, x = 0.0;
    if (id.empty()) violations.push_back(at(out, r) + "empty subject id");
    if (!parse_double(row[o_t], t) || !std::isfinite(t)) {
      violations.push_back(at(out, r) + "time '" + row[o_t] + "' is not a finite number");
      continue;
    }
    if (!parse_double(row[o_x], x) || !std::isfinite(x)) {
      violations.push_back(at(out, r) + "value '" + row[o_x] + "' is not a finite number");
      continue;
    }
    if (t < 0.0) violations.push_back(at(out, r) + "negative time");
    Subject& s = subject(id);
    if (!s.outcomes.empty() && !(t > s.outcomes.back().time))
      violations.push_back(at(out, r) + "outcome times of subject " + id + " not strictly increasing (previous row " +
                           std::to_string(last_out_row[id]) + ")");
    s.outcomes.push_back({t, x});
    last_out_row[id] = out.line_numbers[r];
  }

  const int c_id = column(cov, schema.subject_column);
  const int c_t = column(cov, schema.time_column);
  std::vector<int> c_z;
  for (int c = 0; c < static_cast<int>(cov.header.size()); ++c)
    if (c != c_id && c != c_t) c_z.push_back(c);
  if (c_z.empty() && !cov.rows.empty()) violations.push_back(cov.path + ": no covariate columns");
  for (std::size_t r = 0; r < cov.rows.size(); ++r) {
    const auto& row = cov.rows[r];
    if (row.size() != cov.header.size()) {
      violations.push_back(at(cov, r) + "expected " + std::to_string(cov.header.size()) + " fields, found " +
                           std::to_string(row.size()));
      continue;
    }
    const std::string& id = row[c_id];
    double t = 0.0;
    if (!parse_double(row[c_t], t) || !std::isfinite(t)) {
      violations.push_back(at(cov, r) + "time '" + row[c_t] + "' is not a finite number");
      continue;
    }
    Eigen::VectorXd z(static_cast<Eigen::Index>(c_z.size()));
    bool ok = true;
    for (std::size_t k = 0; k < c_z.size(); ++k) {
      double v = 0.0;
      if (!parse_double(row[c_z[k]], v) || !std::isfinite(v)) {
        violations.push_back(at(cov, r) + "covariate '" + cov.header[c_z[k]] + "' value '" + row[c_z[k]] +
                             "' is not a finite number");
        ok = false;
      }
      z[static_cast<Eigen::Index>(k)] = v;
    }
    if (!ok) continue;
    if (t < 0.0) violations.push_back(at(cov, r) + "negative time");
    Subject& s = subject(id);
    if (!s.covariates.empty() && !(t > s.covariates.back().time))
      violations.push_back(at(cov, r) + "covariate times of subject " + id + " not strictly increasing (previous row " +
                           std::to_string(last_cov_row[id]) + ")");
    s.covariates.push_back({t, std::move(z)});
    last_cov_row[id] = cov.line_numbers[r];
  }

  std::map<std::string, bool> has_followup;
  if (fol) {
    const int f_id = column(*fol, schema.subject_column);
    const int f_t = column(*fol, schema.followup_column);
    for (std::size_t r = 0; r < fol->rows.size(); ++r) {
      const auto& row = fol->rows[r];
      if (row.size() != fol->header.size()) {
        violations.push_back(at(*fol, r) + "expected " + std::to_string(fol->header.size()) + " fields, found " +
                             std::to_string(row.size()));
        continue;
      }
      double t = 0.0;
      if (!parse_double(row[f_t], t) || !std::isfinite(t) || t < 0.0) {
        violations.push_back(at(*fol, r) + "follow-up end '" + row[f_t] + "' is not a nonnegative number");
        continue;
      }
      if (has_followup[row[f_id]]) violations.push_back(at(*fol, r) + "duplicate subject " + row[f_id]);
      has_followup[row[f_id]] = true;
      subject(row[f_id]).followup_end = t;
    }
  }

  for (Subject& s : subjects) {
    if (!has_followup[s.id]) {
      if (fol) violations.push_back(fol->path + ": no follow-up end for subject " + s.id);
      s.followup_end = s.outcomes.empty() ? 0.0 : s.outcomes.back().time;
    } else if (!s.outcomes.empty() && s.outcomes.back().time > s.followup_end) {
      violations.push_back(outcome_path + ": subject " + s.id + " has an outcome after its follow-up end (row " +
                           std::to_string(last_out_row[s.id]) + ")");
    }
    if (schema.require_covariates && !s.outcomes.empty() &&
        (s.covariates.empty() || s.outcomes.front().time < s.covariates.front().time))
      violations.push_back(outcome_path + ": subject " + s.id + " has an outcome at t = " +
                           format_double(s.outcomes.front().time) +
                           " before its first covariate record (carry-forward undefined)");
  }
  if (!violations.empty()) throw DataError("load_csv: invalid input", std::move(violations));

  LongitudinalDataset data(std::move(subjects));
  data.metadata()["time_unit"] = schema.time_unit;
  data.metadata()["source"] = outcome_path;
  data.validate(schema.require_covariates);
  if (report) *report = {out.rows.size(), cov.rows.size(), fol ? fol->rows.size() : 0, data.size()};
  return data;
}

void save_csv(const LongitudinalDataset& data, const std::string& outcome_path, const std::string& covariate_path,
              const std::string& followup_path, const CsvSchema& schema) {
  auto open = [](const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    return f;
  };
  std::ofstream out = open(outcome_path);
  out << schema.subject_column << ',' << schema.time_column << ',' << schema.value_column << '\n';
  for (const Subject& s : data.subjects())
    for (const Observation& o : s.outcomes) out << csv_field(s.id) << ',' << format_double(o.time) << ',' << format_double(o.value) << '\n';

  std::ofstream cov = open(covariate_path);
  cov << schema.subject_column << ',' << schema.time_column;
  const int dim = data.covariate_dim();
  for (int k = 0; k < dim; ++k) cov << ",z" << k + 1;
  cov << '\n';
  for (const Subject& s : data.subjects())
    for (const CovariateRecord& c : s.covariates) {
      cov << csv_field(s.id) << ',' << format_double(c.time);
      for (Eigen::Index k = 0; k < c.value.size(); ++k) cov << ',' << format_double(c.value[k]);
      cov << '\n';
    }

  std::ofstream fol = open(followup_path);
  fol << schema.subject_column << ',' << schema.followup_column << '\n';
  for (const Subject& s : data.subjects()) fol << csv_field(s.id) << ',' << format_double(s.followup_end) << '\n';
  if (!out || !cov || !fol) throw Error("save_csv: write failed");
}

std::string to_string(OutcomeTransform t) { return t == OutcomeTransform::identity ? "identity" : "sqrt"; }
std::string to_string(CovariateTransform t) { return t == CovariateTransform::identity ? "identity" : "log"; }

OutcomeTransform outcome_transform_from_string(const std::string& name) {
  if (name == "identity") return OutcomeTransform::identity;
  if (name == "sqrt") return OutcomeTransform::sqrt;
  throw InvalidArgument("unknown outcome transform '" + name + "' (expected identity or sqrt)");
}

CovariateTransform covariate_transform_from_string(const std::string& name) {
  if (name == "identity") return CovariateTransform::identity;
  if (name == "log") return CovariateTransform::log;
  throw InvalidArgument("unknown covariate transform '" + name + "' (expected identity or log)");
}

LongitudinalDataset apply_transform(const LongitudinalDataset& data, OutcomeTransform outcome,
                                    CovariateTransform covariate) {
  LongitudinalDataset res = data;
  std::vector<std::string> violations;
  for (Subject& s : res.mutable_subjects()) {
    if (outcome == OutcomeTransform::sqrt)
      for (Observation& o : s.outcomes) {
        if (o.value < 0.0)
          violations.push_back("subject " + s.id + " outcome at t = " + format_double(o.time) + ": sqrt of " +
                               format_double(o.value));
        else
          o.value = std::sqrt(o.value);
      }
    if (covariate == CovariateTransform::log)
      for (CovariateRecord& c : s.covariates)
        for (Eigen::Index k = 0; k < c.value.size(); ++k) {
          if (!(c.value[k] > 0.0))
            violations.push_back("subject " + s.id + " covariate " + std::to_string(k + 1) + " at t = " +
                                 format_double(c.time) + ": log of " + format_double(c.value[k]));
          else
            c.value[k] = std::log(c.value[k]);
        }
  }
  if (!violations.empty()) throw DataError("apply_transform: values outside the transform domain", std::move(violations));
  auto& meta = res.metadata();
  meta["outcome_transform"] = append_provenance(meta, "outcome_transform", to_string(outcome));
  meta["covariate_transform"] = append_provenance(meta, "covariate_transform", to_string(covariate));
  return res;
}

void write_columns(const std::string& path, const std::vector<CsvColumn>& columns) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  const std::size_t rows = columns.empty() ? 0 : columns.front().values.size();
  for (const CsvColumn& c : columns)
    if (c.values.size() != rows) throw InvalidArgument("write_columns: columns differ in length");
  for (std::size_t c = 0; c < columns.size(); ++c) f << (c ? "," : "") << columns[c].name;
  f << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) f << (c ? "," : "") << format_double(columns[c].values[r]);
    f << '\n';
  }
  if (!f) throw Error("write failed: " + path);
}

}  // namespace iifpca
