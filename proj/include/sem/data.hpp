#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace sem {

// Column-oriented numeric table. Missing cells are NaN. Text cells that do not
// parse as numbers are kept in `text` so group labels survive ingestion.
struct DataTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;                     // rows x columns
  std::vector<std::vector<std::string>> text; // per column, empty if numeric-only
  std::vector<std::string> index;             // optional row labels

  Eigen::Index rows() const { return values.rows(); }
  int col(const std::string& name) const;  // -1 if absent
  bool has(const std::string& name) const { return col(name) >= 0; }
  Eigen::VectorXd column(const std::string& name) const;
  // String labels of a column; numeric cells are rendered as written.
  std::vector<std::string> labels(const std::string& name) const;
  // Submatrix with the given columns, in order. Throws MissingColumn.
  Eigen::MatrixXd select(const std::vector<std::string>& names) const;
  void add_column(const std::string& name, const Eigen::VectorXd& v);
  DataTable select_rows(const std::vector<int>& rows) const;
};

DataTable make_table(const std::vector<std::string>& columns, const Eigen::MatrixXd& values);

// Comma separated, header row, "." decimal, empty cell = missing. A leading
// unnamed header cell marks a row-index column.
DataTable read_csv(const std::string& path);
DataTable parse_csv(const std::string& content);
void write_csv(const std::string& path, const DataTable& t, int precision = 6);
std::string to_csv(const DataTable& t, int precision = 6);

// Square labelled matrix (header and index carry labels), e.g. a K matrix.
struct LabelledMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd m;
};
LabelledMatrix read_labelled_matrix(const std::string& path);

}  // namespace sem
