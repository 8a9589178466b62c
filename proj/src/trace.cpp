#include "fbgpr/trace.hpp"

#include <map>
#include <stdexcept>

#include "fbgpr/io.hpp"

namespace fbgpr {

std::string trace_csv(const std::vector<std::string>& slot_names,
                      const std::vector<ChainResult>& chains) {
  std::vector<std::string> header = {"chain", "draw"};
  header.insert(header.end(), slot_names.begin(), slot_names.end());
  header.push_back("lp");
  header.push_back("divergent");
  header.push_back("tree_depth");

  std::string out = csv_row(header);
  for (size_t c = 0; c < chains.size(); ++c) {
    const ChainResult& chain = chains[c];
    const int n = static_cast<int>(chain.draws.rows());
    if (chain.draws.cols() != static_cast<long>(slot_names.size())) {
      throw std::invalid_argument("trace_csv: slot name count does not match draws");
    }
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> row;
      row.reserve(header.size());
      row.push_back(std::to_string(c));
      row.push_back(std::to_string(i));
      for (int j = 0; j < chain.draws.cols(); ++j) {
        row.push_back(format_double(chain.draws(i, j)));
      }
      row.push_back(format_double(chain.lp[i]));
      row.push_back(chain.divergent[i] ? "1" : "0");
      row.push_back(std::to_string(chain.tree_depth[i]));
      out += csv_row(row);
    }
  }
  return out;
}

ParsedTrace parse_trace_csv(const std::string& text) {
  const CsvTable table = parse_csv(text);
  const int chain_col = table.column("chain");
  const int draw_col = table.column("draw");
  const int lp_col = table.column("lp");
  const int div_col = table.column("divergent");
  const int depth_col = table.column("tree_depth");
  if (chain_col != 0 || draw_col != 1 || lp_col < 0 || div_col < 0 || depth_col < 0) {
    throw std::runtime_error("trace: missing required columns (chain, draw, ..., lp, divergent, tree_depth)");
  }

  ParsedTrace out;
  for (int j = 2; j < lp_col; ++j) out.slot_names.push_back(table.header[j]);
  const int slots = static_cast<int>(out.slot_names.size());
  if (slots == 0) throw std::runtime_error("trace: no hyperparameter columns");

  // Group rows by chain id, preserving draw order within each chain.
  std::map<int, std::vector<const std::vector<std::string>*>> by_chain;
  for (const auto& row : table.rows) {
    if (static_cast<int>(row.size()) != static_cast<int>(table.header.size())) {
      throw std::runtime_error("trace: ragged row");
    }
    by_chain[std::stoi(row[chain_col])].push_back(&row);
  }

  for (const auto& [id, rows] : by_chain) {
    (void)id;
    ChainResult chain;
    const int n = static_cast<int>(rows.size());
    chain.draws.resize(n, slots);
    chain.lp.resize(n);
    chain.divergent.resize(n);
    chain.tree_depth.resize(n);
    for (int i = 0; i < n; ++i) {
      const auto& row = *rows[i];
      for (int j = 0; j < slots; ++j) chain.draws(i, j) = std::stod(row[2 + j]);
      chain.lp[i] = std::stod(row[lp_col]);
      chain.divergent[i] = static_cast<std::uint8_t>(std::stoi(row[div_col]));
      chain.tree_depth[i] = std::stoi(row[depth_col]);
    }
    chain.divergence_count = 0;
    for (auto d : chain.divergent) chain.divergence_count += d;
    chain.healthy = chain.divergence_count <= 0.25 * n;
    out.chains.push_back(std::move(chain));
  }
  if (out.chains.empty()) throw std::runtime_error("trace: no draws");
  return out;
}

}  // namespace fbgpr
