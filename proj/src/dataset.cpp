#include <cmath>
#include <fstream>

#include "permutopt/harness.hpp"

namespace permutopt {

LoadedDataset read_dataset_csv(std::istream& in, const DatasetSchema& schema) {
  const DenseMatrix raw = read_csv_matrix(in, schema.has_header);
  if (raw.rows() == 0) throw ParameterError("dataset: no data rows");
  if (raw.cols() < 2) throw ParameterError("dataset: need a label column and at least one feature column");

  const Index n = raw.rows();
  const Index d = raw.cols() - 1;
  std::vector<double> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double v = raw(i, 0);
    if (v != 0.0 && v != 1.0) {
      throw ParseError("dataset: label must be 0 or 1 at data row " + std::to_string(i + 1) + ", col 1");
    }
    labels[static_cast<std::size_t>(i)] = v;
  }

  DenseMatrix features = raw.rightCols(d);
  for (Index j = 0; j < d; ++j) {
    auto col = features.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().mean();
    if (var > 0.0) {
      col = (col.array() - mean) / std::sqrt(var);
    } else {
      col.setZero();
    }
  }

  LoadedDataset out;
  out.rows = n;
  out.features = d;
  out.problem = std::make_shared<LogisticProblem>(std::move(features), std::move(labels), schema.l2_weight, schema.id);
  return out;
}

LoadedDataset load_dataset_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParameterError("dataset: cannot open " + path.string());
  try {
    return read_dataset_csv(in, schema);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace permutopt
