#include "caa/eval/sweep.hpp"

#include <cmath>
#include <fstream>

#include "caa/attack/grid_search.hpp"
#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"
#include "caa/eval/report.hpp"
#include "caa/transforms/transforms.hpp"

namespace caa::eval {

SweepResult loss_landscape_sweep(const attack::Model& model, const training::LabeledImages& samples,
                                 transforms::PerturbationKind kind, const transforms::PerturbationInterval& interval,
                                 std::size_t points) {
  if (!transforms::is_semantic(kind)) throw InvalidArgument("loss landscape sweeps need a scalar (semantic) kind");
  transforms::validate(kind, interval);
  if (samples.size() == 0) throw InvalidArgument("loss landscape sweep on an empty sample set");
  SweepResult r;
  r.kind = kind;
  r.grid = attack::grid_values(interval, points);
  const double id = transforms::identity_value(kind);
  for (double& v : r.grid) {
    if (std::abs(v - id) <= 1e-12 * std::max(1.0, interval.width())) v = id;
  }
  r.labels = samples.labels;
  const std::size_t n = samples.size();
  r.losses.assign(n, std::vector<double>(points));
  for (std::size_t p = 0; p < points; ++p) {
    ad::Graph g;
    const ad::NodeId x = g.constant(samples.images);
    const ad::NodeId d = g.constant(ad::Tensor({n}, static_cast<float>(r.grid[p])));
    const ad::NodeId logits = model.logits(g, transforms::apply_perturbation(g, kind, x, d));
    const std::vector<double> ce = ad::cross_entropy_rows(g.forward(logits), samples.labels);
    for (std::size_t i = 0; i < n; ++i) r.losses[i][p] = ce[i];
  }
  return r;
}

void write_sweep_csv(const SweepResult& sweep, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write sweep CSV " + path.string());
  out << "kind,sample,label,delta,loss\n";
  const std::string kind(transforms::to_string(sweep.kind));
  for (std::size_t i = 0; i < sweep.losses.size(); ++i) {
    for (std::size_t p = 0; p < sweep.grid.size(); ++p) {
      out << kind << ',' << i << ',' << sweep.labels[i] << ',' << format_number(sweep.grid[p]) << ','
          << format_number(sweep.losses[i][p]) << '\n';
    }
  }
  if (!out) throw IoError("short write to sweep CSV " + path.string());
}

}  // namespace caa::eval
