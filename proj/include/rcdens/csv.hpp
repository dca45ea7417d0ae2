#pragma once

#include <string>
#include <vector>

#include "rcdens/dataset.hpp"

namespace rcdens {

//! Loads a dataset from CSV with header columns Y, W, X1..Xd (case-sensitive,
//! any column order, d inferred). Throws DataError naming the offending
//! column or cell.
Dataset load_dataset_csv(const std::string& path);

void write_dataset_csv(const std::string& path, const Dataset& data);

//! A row-oriented CSV writer emitting doubles at 17 significant digits so
//! emitted files round-trip losslessly.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path, const std::vector<std::string>& header);
  ~CsvWriter();
  void row(const std::vector<double>& values);
  void raw_row(const std::string& line);
  void close();

 private:
  struct Impl;
  Impl* impl_;
};

std::string format_double(double v);

}  // namespace rcdens
