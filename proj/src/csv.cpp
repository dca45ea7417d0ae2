#include "rcdens/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rcdens/errors.hpp"

namespace rcdens {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  const std::string text = strip(cell);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("non-numeric cell at data row " + std::to_string(row) + ", column " +
                    column + ": '" + text + "'");
  }
  return value;
}

}  // namespace

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);

  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = strip(h);

  int y_col = -1;
  int w_col = -1;
  std::vector<int> x_cols;  // x_cols[j] = file column of X{j+1}
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == "Y") {
      y_col = static_cast<int>(c);
    } else if (name == "W") {
      w_col = static_cast<int>(c);
    } else if (name.size() > 1 && name[0] == 'X') {
      int idx = 0;
      const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
      if (ec != std::errc() || ptr != name.data() + name.size() || idx < 1) {
        throw DataError("unrecognized column '" + name + "' (expected Y, W, X1..Xd)");
      }
      if (static_cast<int>(x_cols.size()) < idx) x_cols.resize(idx, -1);
      x_cols[idx - 1] = static_cast<int>(c);
    } else {
      throw DataError("unrecognized column '" + name + "' (expected Y, W, X1..Xd)");
    }
  }
  if (y_col < 0) throw DataError("missing column Y");
  if (w_col < 0) throw DataError("missing column W");
  if (x_cols.empty()) throw DataError("missing columns X1..Xd");
  for (std::size_t j = 0; j < x_cols.size(); ++j) {
    if (x_cols[j] < 0) throw DataError("missing column X" + std::to_string(j + 1));
  }
  const int d = static_cast<int>(x_cols.size());

  std::vector<double> ys, ws, xs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    ++row;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("data row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    ys.push_back(parse_cell(fields[y_col], row, "Y"));
    ws.push_back(parse_cell(fields[w_col], row, "W"));
    for (int j = 0; j < d; ++j) {
      xs.push_back(parse_cell(fields[x_cols[j]], row, "X" + std::to_string(j + 1)));
    }
  }
  if (row == 0) throw DataError("no data rows in " + path);

  Dataset data;
  const Eigen::Index n = static_cast<Eigen::Index>(row);
  data.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  data.w = Eigen::Map<Eigen::VectorXd>(ws.data(), n);
  data.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, d);
  try {
    data.validate(1);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  return data;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CsvWriter::Impl {
  std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : impl_(new Impl) {
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw DataError("cannot open output file: " + path);
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) impl_->out << ',';
    impl_->out << header[i];
  }
  impl_->out << '\n';
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) impl_->out << ',';
    impl_->out << format_double(values[i]);
  }
  impl_->out << '\n';
}

void CsvWriter::raw_row(const std::string& line) { impl_->out << line << '\n'; }

void CsvWriter::close() {
  impl_->out.close();
  if (impl_->out.fail()) throw DataError("failed writing CSV output");
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::vector<std::string> header{"Y", "W"};
  for (Eigen::Index j = 0; j < data.dim(); ++j) header.push_back("X" + std::to_string(j + 1));
  CsvWriter writer(path, header);
  std::vector<double> row(2 + data.dim());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    row[0] = data.y(i);
    row[1] = data.w(i);
    for (Eigen::Index j = 0; j < data.dim(); ++j) row[2 + j] = data.x(i, j);
    writer.row(row);
  }
  writer.close();
}

}  // namespace rcdens
