#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>

#include "qkdfl/bb84.hpp"
#include "qkdfl/errors.hpp"
#include "qkdfl/experiment.hpp"
#include "qkdfl/masking.hpp"
#include "qkdfl/metrics.hpp"

namespace py = pybind11;
using namespace qkdfl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Python side: an insertion-ordered dict of name -> float64 ndarray.
ParamVec to_params(const py::dict& d) {
  ParamVec p;
  for (auto item : d) {
    const auto arr = Array::ensure(item.second);
    if (!arr) throw py::type_error("parameter values must be array-like");
    Shape shape(arr.shape(), arr.shape() + arr.ndim());
    if (shape.empty()) shape = {1};
    p.add(py::cast<std::string>(item.first), Tensor(shape, std::vector<double>(arr.data(), arr.data() + arr.size())));
  }
  return p;
}

py::dict from_params(const ParamVec& p) {
  py::dict d;
  for (const auto& e : p.entries()) {
    Array arr(e.tensor.shape());
    std::copy(e.tensor.values().begin(), e.tensor.values().end(), arr.mutable_data());
    d[py::str(e.name)] = arr;
  }
  return d;
}

masking::MaskingContext context(const std::string& round_seed, std::uint64_t round, std::size_t k, double gamma,
                                std::size_t key_bits) {
  return {BitString::from_text(round_seed), round, k, gamma, key_bits};
}

std::vector<Tensor> to_tensors(const std::vector<Array>& arrays) {
  std::vector<Tensor> out;
  for (const auto& a : arrays) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    out.emplace_back(shape, std::vector<double>(a.data(), a.data() + a.size()));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deterministic simulator of QKD-secured federated learning";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DegenerateSessionError>(m, "DegenerateSessionError", base.ptr());
  py::register_exception<InvalidPairError>(m, "InvalidPairError", base.ptr());
  py::register_exception<AggregationShapeError>(m, "AggregationShapeError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<UndefinedProxyError>(m, "UndefinedProxyError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<qkd::QkdSession>(m, "QkdSession")
      .def_property_readonly("key", [](const qkd::QkdSession& s) { return s.key.to_text(); })
      .def_readonly("sifted_len", &qkd::QkdSession::sifted_len)
      .def_readonly("final_len", &qkd::QkdSession::final_len)
      .def_readonly("qber", &qkd::QkdSession::qber)
      .def("aborted", &qkd::QkdSession::aborted, py::arg("tau"))
      .def("__repr__", [](const qkd::QkdSession& s) {
        return "QkdSession(sifted_len=" + std::to_string(s.sifted_len) + ", final_len=" + std::to_string(s.final_len) +
               ", qber=" + std::to_string(s.qber) + ")";
      });

  m.def(
      "run_bb84",
      [](std::size_t raw_len, double pa_ratio, double depolarize_prob, bool eve_present, std::uint64_t seed) {
        return qkd::run_bb84({raw_len, pa_ratio, depolarize_prob, eve_present, seed});
      },
      py::arg("raw_len") = 2000, py::arg("pa_ratio") = 0.8, py::arg("depolarize_prob") = 0.0,
      py::arg("eve_present") = false, py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());

  m.def(
      "privacy_amplify",
      [](const std::string& sifted, std::size_t final_len) {
        return qkd::privacy_amplify(BitString::from_text(sifted), final_len).to_text();
      },
      py::arg("sifted"), py::arg("final_len"), "Bit strings are '0'/'1' text.");

  m.def(
      "qber_of",
      [](const std::string& a, const std::string& b, const std::string& mask) {
        return qkd::qber_of(BitString::from_text(a), BitString::from_text(b), BitString::from_text(mask));
      },
      py::arg("alice_bits"), py::arg("bob_bits"), py::arg("sift_mask"));

  m.def(
      "derive_pair_key",
      [](const std::string& round_seed, std::uint64_t round, std::size_t k, std::size_t i, std::size_t j,
         std::size_t key_bits) {
        return masking::derive_pair_key(context(round_seed, round, k, 1e-3, key_bits), i, j).to_text();
      },
      py::arg("round_seed"), py::arg("round"), py::arg("num_clients"), py::arg("i"), py::arg("j"),
      py::arg("key_bits") = 256);

  m.def(
      "bits_to_mask",
      [](const std::string& key, const std::vector<std::size_t>& shape, std::optional<std::uint64_t> ordinal,
         double gamma) {
        const auto bits = BitString::from_text(key);
        const Tensor t = ordinal ? masking::bits_to_mask(bits, shape, *ordinal, gamma)
                                 : masking::bits_to_mask(bits, shape, gamma);
        Array arr(t.shape());
        std::copy(t.values().begin(), t.values().end(), arr.mutable_data());
        return arr;
      },
      py::arg("key"), py::arg("shape"), py::arg("tensor_ordinal") = py::none(), py::arg("gamma") = 1e-3,
      "Without tensor_ordinal the bits are mapped cyclically; with it, the keyed keystream is used.");

  m.def(
      "apply_pairwise_masks",
      [](const py::dict& params, std::size_t client, const std::string& round_seed, std::uint64_t round,
         std::size_t k, double gamma, std::size_t key_bits) {
        const auto masked = masking::apply_pairwise_masks(to_params(params), client,
                                                          context(round_seed, round, k, gamma, key_bits));
        return from_params(masked.params);
      },
      py::arg("params"), py::arg("client"), py::arg("round_seed"), py::arg("round"), py::arg("num_clients"),
      py::arg("gamma") = 1e-3, py::arg("key_bits") = 256);

  m.def(
      "aggregate",
      [](const std::vector<py::dict>& updates, std::uint64_t round) {
        std::vector<masking::MaskedUpdate> ups;
        for (std::size_t k = 0; k < updates.size(); ++k) ups.push_back({k, round, to_params(updates[k])});
        return from_params(masking::aggregate(ups));
      },
      py::arg("updates"), py::arg("round") = 0, "Updates are indexed by list position.");

  m.def(
      "leakage_proxies",
      [](const py::dict& true_delta, const py::dict& masked_delta) {
        const auto p = masking::leakage_proxies(to_params(true_delta), to_params(masked_delta));
        return py::make_tuple(p.cosine, p.pearson);
      },
      py::arg("true_delta"), py::arg("masked_delta"));

  m.def(
      "nmse",
      [](const std::vector<Array>& preds, const std::vector<Array>& targets) {
        return tasks::nmse(to_tensors(preds), to_tensors(targets));
      },
      py::arg("predictions"), py::arg("targets"));

  m.def(
      "segmentation_scores",
      [](const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth, std::size_t classes) {
        const auto s = tasks::segmentation_scores(pred, truth, classes);
        return py::make_tuple(s.accuracy, s.miou);
      },
      py::arg("predicted"), py::arg("truth"), py::arg("num_classes") = tasks::kRadarClasses);

  m.def(
      "validate_config",
      [](const std::filesystem::path& path) { return exp::load_config(path).hash(); }, py::arg("path"),
      "Returns the config hash; raises ConfigError on problems.");

  m.def(
      "run_experiment",
      [](const std::filesystem::path& path, std::optional<std::filesystem::path> out, std::optional<std::uint64_t> seed,
         std::size_t jobs) {
        auto cfg = exp::load_config(path);
        if (seed) cfg.seed = *seed;
        if (out) cfg.output_dir = *out;
        std::vector<std::string> files;
        {
          py::gil_scoped_release release;
          files = exp::write_outputs(exp::run_experiment(cfg, jobs), cfg.output_dir);
        }
        return py::make_tuple(cfg.output_dir, files);
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(), py::arg("jobs") = 1,
      "Runs a config file and writes its outputs; returns (output_dir, file names).");

  m.def("report_leakage", &exp::report_leakage, py::arg("run_dir"));
}
