#ifndef MALAKIT_TRACE_IO_HPP
#define MALAKIT_TRACE_IO_HPP

#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "malakit/dataset.hpp"
#include "malakit/samplers.hpp"

namespace malakit {

// Columns: i,accepted,held,energy_error,log_accept,potential,x_0..x_{d-1}
inline void write_trace_csv(const ChainTrace& trace, std::ostream& os) {
  const auto d = trace.records.empty() ? 0 : trace.records.front().state.size();
  os << "i,accepted,held,energy_error,log_accept,potential";
  for (Eigen::Index k = 0; k < d; ++k) os << ",x_" << k;
  os << '\n';
  for (const auto& rec : trace.records) {
    os << rec.index << ',' << (rec.accepted ? 1 : 0) << ',' << (rec.held ? 1 : 0) << ','
       << format_double(rec.energy_error) << ',' << format_double(rec.log_accept) << ','
       << format_double(rec.potential);
    for (Eigen::Index k = 0; k < rec.state.size(); ++k) os << ',' << format_double(rec.state[k]);
    os << '\n';
  }
}

inline nlohmann::json trace_metadata(const ChainTrace& trace) {
  std::vector<double> best(trace.best_state.data(),
                           trace.best_state.data() + trace.best_state.size());
  nlohmann::json j = {{"sampler", to_string(trace.kind)},
                      {"target", trace.target_id},
                      {"step_size", trace.config.step_size},
                      {"iterations", trace.config.iterations},
                      {"seed", trace.config.seed},
                      {"stream", trace.config.stream},
                      {"lazy", trace.config.lazy},
                      {"record_every", trace.config.record_every},
                      {"gradient_evals", trace.gradient_evals},
                      {"function_evals", trace.function_evals},
                      {"proposals", trace.proposals},
                      {"accepted", trace.accepted},
                      {"argmin_index", trace.argmin_index},
                      {"best_potential", trace.best_potential},
                      {"best_state", best}};
  if (trace.config.constraint) j["constraint"] = trace.config.constraint->description;
  return j;
}

inline void save_trace(const ChainTrace& trace, const std::filesystem::path& csv,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  {
    std::ofstream os(csv);
    if (!os) throw std::runtime_error("cannot write " + csv.string());
    write_trace_csv(trace, os);
  }
  nlohmann::json meta = trace_metadata(trace);
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  std::filesystem::path side = csv;
  side.replace_extension(".json");
  std::ofstream js(side);
  if (!js) throw std::runtime_error("cannot write " + side.string());
  js << meta.dump(2) << '\n';
}

}  // namespace malakit

#endif
