#pragma once

// CSV emission for metric rows and sample logs. Columns are stable across
// objectives; metrics that do not apply to a run stay empty rather than
// carrying a guessed value. Doubles print as shortest round-trip decimals so
// identical runs produce identical bytes.

#include <sstream>
#include <string>
#include <vector>

#include "gfn/eval.hpp"
#include "gfn/io_util.hpp"
#include "gfn/trainer.hpp"

namespace gfn {

inline constexpr const char* kMetricsHeader =
    "step,transitions,loss,topk_reward,modes,l1,spearman";

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream o;
  o << kMetricsHeader << "\n";
  for (const auto& r : rows) {
    o << r.step << ',' << r.transitions << ',';
    if (r.loss) o << fmt_g(*r.loss);
    o << ',';
    if (r.topk_reward) o << fmt_g(*r.topk_reward);
    o << ',';
    if (r.modes) o << *r.modes;
    o << ',';
    if (r.l1) o << fmt_g(*r.l1);
    o << ',';
    if (r.spearman_corr) o << fmt_g(*r.spearman_corr);
    o << '\n';
  }
  return o.str();
}

inline std::string samples_csv(const std::vector<SampleRecord>& samples) {
  std::ostringstream o;
  o << "key,reward,step\n";
  for (const auto& s : samples)
    o << s.key << ',' << fmt_g(s.reward) << ',' << s.step << '\n';
  return o.str();
}

inline std::vector<SampleRecord> parse_samples_csv(const std::string& text) {
  std::vector<SampleRecord> out;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("samples csv: malformed line: " + line);
    out.push_back({line.substr(0, c1), std::stod(line.substr(c1 + 1, c2 - c1 - 1)),
                   std::stoll(line.substr(c2 + 1))});
  }
  return out;
}

inline std::string timing_csv(const std::vector<std::pair<long long, double>>& timing) {
  std::ostringstream o;
  o << "step,seconds\n";
  for (const auto& [step, sec] : timing) o << step << ',' << fmt_g(sec) << '\n';
  return o.str();
}

}  // namespace gfn
