#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "refsteer/augment.hpp"
#include "refsteer/env.hpp"
#include "refsteer/heads.hpp"
#include "refsteer/io.hpp"
#include "refsteer/metrics.hpp"
#include "refsteer/policy.hpp"
#include "refsteer/runtime.hpp"

namespace py = pybind11;
using namespace refsteer;

namespace {

// Patterns go out as uint8 so numpy sees a plain matrix; the Python side casts to bool.
Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> as_u8(const MaskPattern& m) {
  return m.cast<std::uint8_t>().matrix();
}

Trajectory rows(const Eigen::MatrixXd& m) {
  if (m.cols() != kActionDim) throw Error("expected an (n x 8) action array");
  return from_matrix(m);
}

std::vector<std::string> dump_records(const std::vector<RolloutRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(record_to_json(r).dump());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of refsteer";
  py::register_exception<Error>(m, "RefsteerError", PyExc_ValueError);

  m.def("make_horizon", [](int n1, int n2) {
    const auto h = make_horizon(n1, n2);
    return py::make_tuple(h.n1, h.n2, h.n);
  });
  m.def("anchor_indices", [](int n1, int n2) { return anchor_indices(make_horizon(n1, n2)); });
  m.def("nearest_anchor_slot", [](int n1, int n2, int j) { return nearest_anchor_slot(make_horizon(n1, n2), j); });

  m.def("gdh_pattern", [](int i, int n1) { return as_u8(gdh_pattern(i, n1)); });
  m.def("gdh_referring_pattern", [](int i, int k, int n1) { return as_u8(gdh_referring_pattern(i, k, n1)); });
  m.def("ldh_pattern", [](int n2) { return as_u8(ldh_pattern(n2)); });

  m.def("blendable_range", &blendable_range, py::arg("n"), py::arg("window"));
  m.def("solve_blend_pieces", [](double delta, int window) {
    const auto p = solve_blend_pieces(delta, window);
    return py::make_tuple(Eigen::VectorXd(p[0]), Eigen::VectorXd(p[1]));
  });
  m.def("ood_offsets", &ood_offsets, py::arg("p_e"), py::arg("p_o"), py::arg("lambdas"));

  m.def("min_distance", [](const Eigen::MatrixXd& traj, const Vec3& p) { return min_distance(rows(traj), p); });
  m.def("mean_step_length", [](const Eigen::MatrixXd& traj) { return mean_step_length(rows(traj)); });
  m.def("smoothness_score", &smoothness_score, py::arg("mean_step"), py::arg("lam"));

  m.def("tasks", [] { return std::vector<std::string>{"reach-via", "pick-place-via", "push-t-via"}; });
  m.def("task_horizon", [](const std::string& name) {
    const auto h = make_task(name).horizon;
    return py::make_tuple(h.n1, h.n2, h.n);
  });
  m.def("expert_demo", [](const std::string& task, std::uint64_t seed) {
    const Demonstration d = expert_demo(make_task(task), seed);
    Eigen::MatrixXd obs(static_cast<Eigen::Index>(d.observations.size()), d.observations.front().size());
    for (std::size_t t = 0; t < d.observations.size(); ++t) obs.row(static_cast<Eigen::Index>(t)) = d.observations[t];
    return py::make_tuple(to_matrix(d.actions), obs);
  });

  m.def("evaluate_json", [](const std::vector<std::string>& records, double eps, double lam) {
    std::vector<RolloutRecord> rs;
    rs.reserve(records.size());
    for (const auto& s : records) rs.push_back(record_from_json(nlohmann::json::parse(s)));
    return to_json(evaluate(rs, eps, lam), eps, lam).dump();
  });

  py::class_<Policy>(m, "Policy")
      .def_static("load", &Policy::load, py::arg("directory"))
      .def_property_readonly("task", &Policy::task)
      .def_property_readonly("horizon", [](const Policy& p) {
        return py::make_tuple(p.horizon().n1, p.horizon().n2, p.horizon().n);
      })
      .def(
          "rollout_json",
          [](const Policy& p, const std::vector<std::uint64_t>& seeds, const std::string& mode,
             std::optional<Vec3> fixed, const std::string& method, int jobs) {
            RolloutSpec spec;
            spec.mode = parse_refer_mode(mode);
            spec.fixed = fixed;
            spec.method = method;
            const Task task = make_task(p.task());
            std::vector<RolloutRecord> out;
            {
              py::gil_scoped_release release;
              out = run_episodes(p, task, seeds, spec, jobs);
            }
            return dump_records(out);
          },
          py::arg("seeds"), py::arg("mode") = "via", py::arg("fixed") = std::nullopt,
          py::arg("method") = "rev", py::arg("jobs") = 1);
}
