#include "sem/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sem/errors.hpp"

namespace sem {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool to_double(const std::string& s, double& v) {
  size_t a = 0, b = s.size();
  while (a < b && s[a] == ' ') ++a;
  while (b > a && s[b - 1] == ' ') --b;
  if (a == b) return false;
  const char* p = s.data() + a;
  if (*p == '+') ++p;
  auto r = std::from_chars(p, s.data() + b, v);
  return r.ec == std::errc() && r.ptr == s.data() + b;
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == ".";
}

}  // namespace

int DataTable::col(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

Eigen::VectorXd DataTable::column(const std::string& name) const {
  int c = col(name);
  if (c < 0) throw SemError(ErrorCode::MissingColumn, "column '" + name + "' not in data");
  return values.col(c);
}

std::vector<std::string> DataTable::labels(const std::string& name) const {
  int c = col(name);
  if (c < 0) throw SemError(ErrorCode::MissingColumn, "column '" + name + "' not in data");
  std::vector<std::string> out(values.rows());
  if (static_cast<size_t>(c) < text.size() && !text[c].empty()) return text[c];
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    double v = values(i, c);
    if (std::isnan(v)) {
      out[i] = "";
    } else if (v == std::floor(v) && std::fabs(v) < 1e15) {
      out[i] = std::to_string(static_cast<long long>(v));
    } else {
      std::ostringstream ss;
      ss.precision(17);
      ss << v;
      out[i] = ss.str();
    }
  }
  return out;
}

Eigen::MatrixXd DataTable::select(const std::vector<std::string>& names) const {
  Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(names.size()));
  for (size_t j = 0; j < names.size(); ++j) out.col(j) = column(names[j]);
  return out;
}

void DataTable::add_column(const std::string& name, const Eigen::VectorXd& v) {
  if (values.rows() != 0 && v.size() != values.rows())
    throw SemError(ErrorCode::DimensionMismatch, "column '" + name + "' has wrong length");
  int c = col(name);
  if (c >= 0) {
    values.col(c) = v;
    if (static_cast<size_t>(c) < text.size()) text[c].clear();
    return;
  }
  Eigen::MatrixXd nv(v.size(), values.cols() + 1);
  if (values.cols()) nv.leftCols(values.cols()) = values;
  nv.col(values.cols()) = v;
  values = std::move(nv);
  columns.push_back(name);
  text.resize(columns.size());
}

DataTable DataTable::select_rows(const std::vector<int>& rows) const {
  DataTable t;
  t.columns = columns;
  t.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  t.text.resize(text.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    t.values.row(i) = values.row(rows[i]);
    if (!index.empty()) t.index.push_back(index[rows[i]]);
  }
  for (size_t c = 0; c < text.size(); ++c)
    if (!text[c].empty())
      for (int r : rows) t.text[c].push_back(text[c][r]);
  return t;
}

DataTable make_table(const std::vector<std::string>& columns, const Eigen::MatrixXd& values) {
  DataTable t;
  t.columns = columns;
  t.values = values;
  t.text.resize(columns.size());
  return t;
}

DataTable parse_csv(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw SemError(ErrorCode::Io, "empty CSV");
  std::vector<std::string> header = rows[0];
  bool has_index = !header.empty() && header[0].empty();
  size_t off = has_index ? 1 : 0;
  DataTable t;
  t.columns.assign(header.begin() + off, header.end());
  size_t nc = t.columns.size(), nr = rows.size() - 1;
  t.values.setConstant(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc),
                       std::numeric_limits<double>::quiet_NaN());
  t.text.assign(nc, {});
  std::vector<bool> textual(nc, false);
  for (size_t r = 0; r < nr; ++r) {
    const auto& cells = rows[r + 1];
    if (has_index) t.index.push_back(cells.empty() ? "" : cells[0]);
    for (size_t c = 0; c < nc; ++c) {
      std::string cell = c + off < cells.size() ? cells[c + off] : "";
      double v;
      if (to_double(cell, v)) {
        t.values(r, c) = v;
      } else if (!is_missing(cell)) {
        textual[c] = true;
      }
    }
  }
  for (size_t c = 0; c < nc; ++c) {
    if (!textual[c]) continue;
    t.text[c].resize(nr);
    for (size_t r = 0; r < nr; ++r) {
      const auto& cells = rows[r + 1];
      t.text[c][r] = c + off < cells.size() ? cells[c + off] : "";
    }
  }
  return t;
}

DataTable read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SemError(ErrorCode::Io, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

std::string to_csv(const DataTable& t, int precision) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(precision);
  bool idx = !t.index.empty();
  if (idx) out << ',';
  for (size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
  out << '\n';
  for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
    if (idx) out << t.index[r] << ',';
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
      if (c) out << ',';
      if (static_cast<size_t>(c) < t.text.size() && !t.text[c].empty())
        out << t.text[c][r];
      else if (!std::isnan(t.values(r, c)))
        out << t.values(r, c);
    }
    out << '\n';
  }
  return out.str();
}

void write_csv(const std::string& path, const DataTable& t, int precision) {
  std::ofstream f(path);
  if (!f) throw SemError(ErrorCode::Io, "cannot write '" + path + "'");
  f << to_csv(t, precision);
}

LabelledMatrix read_labelled_matrix(const std::string& path) {
  DataTable t = read_csv(path);
  LabelledMatrix lm;
  // Either an unnamed index column or a first named column holding labels.
  if (!t.index.empty()) {
    lm.labels = t.index;
    lm.m = t.values;
  } else {
    lm.labels = t.labels(t.columns[0]);
    lm.m = t.values.rightCols(t.values.cols() - 1);
  }
  if (lm.m.rows() != lm.m.cols())
    throw SemError(ErrorCode::DimensionMismatch, "K matrix in '" + path + "' is not square");
  return lm;
}

}  // namespace sem
