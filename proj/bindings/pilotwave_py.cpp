// Python bindings for the core operations: grids, states, evolution,
// densities, velocity laws, trajectory integration, the variable-set jump
// process and the statistical tests.

#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pilotwave/experiment.hpp"

namespace py = pybind11;
using namespace pilotwave;

namespace {

struct PyGrid {
  GridPtr g;
};

PyGrid make_grid(int num_particles, int points_per_axis, std::pair<double, double> box,
                 int space_dim, std::vector<double> masses, double hbar, int spin_dim) {
  GridSpec spec;
  spec.num_particles = num_particles;
  spec.space_dim = space_dim;
  spec.points_per_axis = points_per_axis;
  spec.x_min = box.first;
  spec.x_max = box.second;
  ModelParams params;
  params.hbar = hbar;
  params.spin_dim = spin_dim;
  params.masses = masses.empty() ? std::vector<double>(num_particles, 1.0) : std::move(masses);
  return {Grid::build(spec, params)};
}

py::array_t<std::complex<double>> amplitudes_array(const SpinorWaveFunction& psi) {
  const auto cells = static_cast<py::ssize_t>(psi.grid->num_cells());
  const auto ell = static_cast<py::ssize_t>(psi.spin_dim());
  py::array_t<std::complex<double>> out({cells, ell});
  std::copy(psi.amp.begin(), psi.amp.end(), out.mutable_data());
  return out;
}

py::array_t<double> field_array(const Field<double>& f) {
  py::array_t<double> out(static_cast<py::ssize_t>(f.size()));
  std::copy(f.data().begin(), f.data().end(), out.mutable_data());
  return out;
}

StateRecipe gaussian_recipe(const std::vector<std::tuple<std::vector<double>,
                                                         std::vector<double>, double>>& packets) {
  std::vector<GaussianPacket> ps;
  for (const auto& [center, momentum, width] : packets) ps.push_back({center, momentum, width});
  return StateRecipe::gaussian_product(std::move(ps));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "pilot-wave dynamics: spectral evolution, velocity laws, jump processes";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ResourceError>(m, "ResourceError", PyExc_MemoryError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<OutOfDomainError>(m, "OutOfDomainError", PyExc_ValueError);
  py::register_exception<NodeProximityError>(m, "NodeProximityError", PyExc_ArithmeticError);

  m.def("version", &version_string);

  py::class_<PyGrid>(m, "Grid")
      .def(py::init(&make_grid), py::arg("num_particles"), py::arg("points_per_axis") = 256,
           py::arg("box") = std::pair<double, double>(-20.0, 20.0), py::arg("space_dim") = 1,
           py::arg("masses") = std::vector<double>{}, py::arg("hbar") = 1.0,
           py::arg("spin_dim") = 1)
      .def_property_readonly("num_cells", [](const PyGrid& g) { return g.g->num_cells(); })
      .def_property_readonly("dx", [](const PyGrid& g) { return g.g->dx(); })
      .def_property_readonly("cell_volume", [](const PyGrid& g) { return g.g->cell_volume(); })
      .def_property_readonly("axis_coords", [](const PyGrid& g) {
        py::array_t<double> out(static_cast<py::ssize_t>(g.g->axis_coords().size()));
        std::copy(g.g->axis_coords().begin(), g.g->axis_coords().end(), out.mutable_data());
        return out;
      });

  py::class_<StateRecipe>(m, "StateRecipe");
  m.def("gaussian_product", &gaussian_recipe, py::arg("packets"),
        "packets: list of (center, momentum, width) per particle");
  m.def("plane_wave", &StateRecipe::plane_wave, py::arg("wavenumbers"));
  m.def("oscillator", &StateRecipe::oscillator, py::arg("levels"), py::arg("stiffness"));
  m.def(
      "superposition",
      [](const std::vector<std::pair<std::complex<double>, StateRecipe>>& terms) {
        std::vector<std::pair<cxd, std::shared_ptr<StateRecipe>>> ts;
        for (const auto& [w, r] : terms) ts.emplace_back(w, std::make_shared<StateRecipe>(r));
        return StateRecipe::superposition(std::move(ts));
      },
      py::arg("terms"));
  m.def("symmetrize", &StateRecipe::symmetrized, py::arg("inner"));
  m.def("antisymmetrize", &StateRecipe::antisymmetrized, py::arg("inner"));

  py::class_<Potential>(m, "Potential")
      .def_static("zero", &Potential::zero)
      .def_static("harmonic", &Potential::harmonic, py::arg("stiffness"))
      .def_static("scalar_field", &Potential::scalar_field, py::arg("values"));

  py::class_<SpinorWaveFunction>(m, "State")
      .def_property_readonly("time", [](const SpinorWaveFunction& s) { return s.time; })
      .def("norm_sq", &SpinorWaveFunction::norm_sq)
      .def("amplitudes", &amplitudes_array)
      .def("boundary_mass", [](const SpinorWaveFunction& s) { return boundary_mass(s); });

  m.def(
      "init_state",
      [](const StateRecipe& recipe, const PyGrid& grid) { return init_state(recipe, grid.g); },
      py::arg("recipe"), py::arg("grid"));

  m.def(
      "evolve",
      [](const SpinorWaveFunction& psi, double dt, int n_steps, const Potential& pot) {
        return evolve(psi, dt, n_steps, pot);
      },
      py::arg("state"), py::arg("dt"), py::arg("n_steps"), py::arg("potential") = Potential::zero());

  m.def("density", [](const SpinorWaveFunction& psi) {
    return field_array(density_current(psi).rho);
  });
  m.def("currents", [](const SpinorWaveFunction& psi) {
    FieldBundle fb = density_current(psi);
    std::vector<py::array_t<double>> out;
    for (const auto& j : fb.currents) out.push_back(field_array(j));
    return out;
  });
  m.def(
      "reduced_density",
      [](const SpinorWaveFunction& psi, const std::vector<int>& real_set) {
        return field_array(
            reduced_density(psi, IndexSet::from_members(real_set, psi.grid->num_particles())));
      },
      py::arg("state"), py::arg("real_set"));
  m.def("symmetrized_density", [](const SpinorWaveFunction& psi) {
    return field_array(symmetrized_density(psi).normalized);
  });

  m.def(
      "velocity_full",
      [](const SpinorWaveFunction& psi, const std::vector<double>& q) {
        return velocity_full(psi, {q, psi.time});
      },
      py::arg("state"), py::arg("q"));
  m.def(
      "velocity_reduced",
      [](const SpinorWaveFunction& psi, const std::vector<int>& real_set,
         const std::vector<double>& coords) {
        return velocity_reduced(psi, IndexSet::from_members(real_set, psi.grid->num_particles()),
                                coords);
      },
      py::arg("state"), py::arg("real_set"), py::arg("coords"));
  m.def(
      "velocity_symmetrized",
      [](const SpinorWaveFunction& psi, const std::vector<double>& pts) {
        return velocity_symmetrized(psi,
                                    UnorderedConfig::from_points(pts, psi.grid->space_dim()));
      },
      py::arg("state"), py::arg("points"));

  m.def(
      "integrate",
      [](const SpinorWaveFunction& psi, const std::string& law, const std::vector<int>& real_set,
         const std::vector<double>& start, double T, double stride, int pde_substeps,
         const Potential& pot) {
        LawSpec spec;
        if (law == "full")
          spec = LawSpec::full();
        else if (law == "reduced")
          spec = LawSpec::reduced(IndexSet::from_members(real_set, psi.grid->num_particles()));
        else if (law == "symmetrized")
          spec = LawSpec::symmetrized();
        else
          throw ValidationError("law must be full, reduced or symmetrized");
        IntegratorControls ctl;
        ctl.stride = stride;
        ctl.pde_substeps = pde_substeps;
        Trajectory tr = integrate(psi, pot, spec, start, T, ctl);
        py::dict out;
        out["times"] = tr.times;
        out["configs"] = tr.configs;
        out["abort"] = std::string(to_string(tr.abort));
        return out;
      },
      py::arg("state"), py::arg("law"), py::arg("real_set"), py::arg("start"), py::arg("T"),
      py::arg("stride") = 0.01, py::arg("pde_substeps") = 10,
      py::arg("potential") = Potential::zero());

  m.def(
      "sample_positions",
      [](const SpinorWaveFunction& psi, std::size_t n, uint64_t seed) {
        FieldBundle fb = density_current(psi);
        return sample_config_streams(fb.rho, n, seed, StreamTag::InitialDraw);
      },
      py::arg("state"), py::arg("n"), py::arg("seed"));

  m.def(
      "ks_two_sample",
      [](std::vector<double> a, std::vector<double> b) {
        KsResult r = ks_two_sample(std::move(a), std::move(b));
        return std::pair(r.d_stat, r.p_value);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "chi_square_binned",
      [](const std::vector<std::size_t>& counts, const std::vector<double>& expected) {
        ChiSquareResult r = chi_square_binned(counts, expected);
        return std::tuple(r.chi2, r.dof, r.p_value);
      },
      py::arg("counts"), py::arg("expected_mass"));

  m.def("dump_state", [](const SpinorWaveFunction& psi, const std::string& path) {
    dump_state(psi, path);
  });
  m.def("load_state", &load_state, py::arg("path"));

  m.def(
      "run_config_text",
      [](const std::string& text) {
        RunConfig cfg = parse_config_text(text);
        std::ostringstream log;
        RunArtifacts art = run_experiment(cfg, log);
        py::dict out;
        out["pass"] = art.pass;
        out["exit_code"] = art.exit_code;
        out["report_path"] = art.report_path;
        out["manifest_path"] = art.manifest_path;
        out["log"] = log.str();
        return out;
      },
      py::arg("config_json"), "run a full experiment from a JSON config string");
}
