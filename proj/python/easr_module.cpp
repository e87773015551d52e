#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "easr/bench.hpp"
#include "easr/cffn.hpp"
#include "easr/config.hpp"
#include "easr/cost_model.hpp"
#include "easr/ctc.hpp"
#include "easr/errors.hpp"
#include "easr/experiment.hpp"
#include "easr/metrics.hpp"
#include "easr/model.hpp"

namespace py = pybind11;

namespace {

py::tuple as_tuple(const easr::BlockCost& c) { return py::make_tuple(c.params, c.flops); }

py::dict row_dict(const easr::CostRow& r) {
  py::dict d;
  d["block"] = r.block;
  d["params_analytic"] = r.params_analytic;
  d["params_measured"] = r.params_measured;
  d["flops_analytic"] = r.flops_analytic;
  d["flops_measured"] = r.flops_measured;
  d["reduction_pct"] = r.reduction_pct;
  return d;
}

py::tuple ctc(py::array_t<double, py::array::c_style | py::array::forcecast> log_probs,
              const std::vector<std::vector<int>>& targets,
              const std::vector<std::size_t>& input_lengths, int blank) {
  if (log_probs.ndim() != 3) throw easr::RankError("log_probs must be [B, T, V]");
  easr::Shape shape{static_cast<std::size_t>(log_probs.shape(0)),
                    static_cast<std::size_t>(log_probs.shape(1)),
                    static_cast<std::size_t>(log_probs.shape(2))};
  easr::Buffer data(log_probs.data(), log_probs.data() + log_probs.size());
  const easr::CtcLoss loss =
      easr::ctc_loss(easr::Tensor(shape, std::move(data)), targets, input_lengths, blank);
  return py::make_tuple(loss.value.item(), loss.feasible);
}

}  // namespace

PYBIND11_MODULE(_easr, m) {
  m.doc() = "EfficientASR cost model, losses and experiment drivers";

  static py::exception<easr::Error> error(m, "EasrError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const easr::Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::class_<easr::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_property(
          "variant", [](const easr::ModelConfig& c) { return easr::variant_name(c.variant); },
          [](easr::ModelConfig& c, const std::string& v) { c.variant = easr::parse_variant(v); })
      .def_readwrite("d_model", &easr::ModelConfig::d_model)
      .def_readwrite("d_ff", &easr::ModelConfig::d_ff)
      .def_readwrite("heads", &easr::ModelConfig::heads)
      .def_readwrite("enc_layers", &easr::ModelConfig::enc_layers)
      .def_readwrite("dec_layers", &easr::ModelConfig::dec_layers)
      .def_readwrite("i_enc", &easr::ModelConfig::i_enc)
      .def_readwrite("i_dec", &easr::ModelConfig::i_dec)
      .def_readwrite("n_chunks", &easr::ModelConfig::n_chunks)
      .def_readwrite("window", &easr::ModelConfig::window)
      .def_readwrite("feature_dim", &easr::ModelConfig::feature_dim)
      .def_readwrite("vocab_size", &easr::ModelConfig::vocab_size)
      .def_readwrite("alpha_ce", &easr::ModelConfig::alpha_ce)
      .def_readwrite("alpha_ctc", &easr::ModelConfig::alpha_ctc)
      .def_readwrite("label_smoothing", &easr::ModelConfig::label_smoothing)
      .def_readwrite("dropout", &easr::ModelConfig::dropout)
      .def_readwrite("share_raw_scores", &easr::ModelConfig::share_raw_scores)
      .def("validate", &easr::ModelConfig::validate)
      .def("matched_baseline", &easr::ModelConfig::matched_baseline);

  m.def("mha_cost", [](std::uint64_t d, std::uint64_t B, std::uint64_t T) {
    return as_tuple(easr::mha_cost(d, B, T));
  }, py::arg("d"), py::arg("B"), py::arg("T"));
  m.def("srmha_shared_cost", [](std::uint64_t d, std::uint64_t B, std::uint64_t T) {
    return as_tuple(easr::srmha_shared_cost(d, B, T));
  }, py::arg("d"), py::arg("B"), py::arg("T"));
  m.def("ffn_cost", [](std::uint64_t d, std::uint64_t d_ff, std::uint64_t B, std::uint64_t T) {
    return as_tuple(easr::ffn_cost(d, d_ff, B, T));
  }, py::arg("d"), py::arg("d_ff"), py::arg("B"), py::arg("T"));
  m.def("cffn_cost",
        [](std::uint64_t d, std::uint64_t d_ff, std::uint64_t n, std::uint64_t B, std::uint64_t T) {
          return as_tuple(easr::cffn_cost(d, d_ff, n, B, T));
        },
        py::arg("d"), py::arg("d_ff"), py::arg("n"), py::arg("B"), py::arg("T"));
  m.def("cffn_param_count", &easr::cffn_param_count, py::arg("d"), py::arg("d_ff"), py::arg("n"));
  m.def("build_schedule", [](std::size_t layers, std::size_t period) {
    return easr::build_schedule(layers, period).to_string();
  }, py::arg("layers"), py::arg("period"));
  m.def("cer", [](const std::vector<int>& hyp, const std::vector<int>& ref) {
    return easr::cer(hyp, ref);
  }, py::arg("hyp"), py::arg("ref"));
  m.def("ctc_loss", &ctc, py::arg("log_probs"), py::arg("targets"), py::arg("input_lengths"),
        py::arg("blank") = 0, "Returns (batch-mean loss, per-item feasibility).");

  m.def("model_cost_report",
        [](const easr::ModelConfig& cfg, std::size_t B, std::size_t T, std::size_t T_dec) {
          const easr::CostReport r = easr::model_cost_report(cfg, cfg.matched_baseline(), B, T, T_dec);
          py::dict out;
          py::list rows;
          for (const auto& row : r.rows) rows.append(row_dict(row));
          out["rows"] = rows;
          out["param_reduction_pct"] = r.param_reduction_pct;
          out["core_param_reduction_pct"] = r.core_param_reduction_pct;
          out["ffn_weight_reduction_pct"] = r.ffn_weight_reduction_pct;
          out["flop_reduction_pct"] = r.flop_reduction_pct;
          return out;
        },
        py::arg("config"), py::arg("B") = 1, py::arg("T") = 16, py::arg("T_dec") = 0);

  m.def("run_experiment",
        [](const std::string& config_text, const std::string& out_dir) {
          const auto cfg =
              easr::ExperimentConfig::from_key_values(easr::KeyValueConfig::parse(config_text));
          easr::ExperimentResult r;
          {
            py::gil_scoped_release release;
            r = easr::run_experiment(cfg, out_dir);
          }
          py::dict out;
          out["steps"] = r.metrics.size();
          out["final_loss"] = r.metrics.empty() ? 0.0 : r.metrics.back().loss;
          out["final_dev_cer"] = r.final_dev_cer;
          out["metrics_path"] = r.metrics_path;
          out["checkpoint_path"] = r.checkpoint_path;
          return out;
        },
        py::arg("config_text"), py::arg("out_dir"),
        "Train from `key = value` config text; unspecified keys use the copy-task defaults.");

  m.def("copy_task_config", []() { return easr::copy_task_config().to_text(); });

  m.def("bench_memory",
        [](const easr::ModelConfig& cfg, const std::vector<std::size_t>& lengths,
           std::size_t decoder_ratio, std::uint64_t seed) {
          easr::BenchConfig bench;
          bench.lengths = lengths;
          bench.decoder_ratio = decoder_ratio;
          std::vector<easr::BenchRow> rows;
          {
            py::gil_scoped_release release;
            rows = easr::bench_memory(cfg, bench, seed);
          }
          py::list out;
          for (const auto& r : rows) {
            py::dict d;
            d["model"] = r.model;
            d["T"] = r.steps;
            d["T_dec"] = r.dec_steps;
            d["params_bytes"] = r.params_bytes;
            d["peak_bytes"] = r.peak_bytes;
            d["analytic_bytes"] = r.analytic_bytes;
            d["score_bytes"] = r.score_bytes;
            d["status"] = r.status;
            out.append(d);
          }
          return out;
        },
        py::arg("config"), py::arg("lengths"), py::arg("decoder_ratio") = 4, py::arg("seed") = 1);
}
