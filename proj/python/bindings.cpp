#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lsa/commands.hpp"
#include "lsa/diffusion.hpp"
#include "lsa/error.hpp"
#include "lsa/eval.hpp"
#include "lsa/lsa_loss.hpp"
#include "lsa/scenes.hpp"

namespace py = pybind11;
using namespace lsa;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
    return out;
}

json parse(const std::string& s) { return s.empty() ? json::object() : json::parse(s); }

py::tuple box_tuple(const Box& b) { return py::make_tuple(b.x_min, b.y_min, b.x_max, b.y_max, b.class_label, b.object_id); }

Box to_box(const py::sequence& s) {
    if (s.size() < 4) throw InvariantError("a box needs at least (x_min, y_min, x_max, y_max)");
    Box b{s[0].cast<double>(), s[1].cast<double>(), s[2].cast<double>(), s[3].cast<double>(), "car", 0};
    if (s.size() > 4) b.class_label = s[4].cast<std::string>();
    if (s.size() > 5) b.object_id = s[5].cast<std::int64_t>();
    return b;
}

BoxTrack to_track(const std::vector<std::vector<py::sequence>>& frames) {
    BoxTrack t(frames.size());
    for (std::size_t n = 0; n < frames.size(); ++n)
        for (const auto& b : frames[n]) t[n].push_back(to_box(b));
    return t;
}

std::vector<std::vector<py::tuple>> from_track(const BoxTrack& t) {
    std::vector<std::vector<py::tuple>> out(t.size());
    for (std::size_t n = 0; n < t.size(); ++n)
        for (const auto& b : t[n]) out[n].push_back(box_tuple(b));
    return out;
}

commands::Logger py_logger(const std::optional<std::function<void(const std::string&)>>& f) {
    if (!f) return {};
    return [f](const std::string& m) { (*f)(m); };
}

config::RunConfig run_config(const std::string& config_json) { return config::from_json(parse(config_json)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bindings for the lsa video-diffusion fine-tuning library";

    auto base = py::register_exception<Error>(m, "LsaError", PyExc_RuntimeError);
    py::register_exception<InvariantError>(m, "InvariantError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<SpecMismatchError>(m, "SpecMismatchError", base.ptr());
    py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

    m.def("c_out", &diffusion::c_out, py::arg("sigma"));
    m.def("c_skip", &diffusion::c_skip, py::arg("sigma"));
    m.def("loss_weight", &diffusion::loss_weight, py::arg("sigma"));
    m.def(
        "karras_sigmas", [](std::size_t steps, double sigma_min, double sigma_max, double rho) {
            return diffusion::make_schedule(steps, sigma_min, sigma_max, rho).sigmas();
        },
        py::arg("steps"), py::arg("sigma_min") = 0.002, py::arg("sigma_max") = 80.0, py::arg("rho") = 7.0);
    m.def(
        "denoised_estimate", [](const Array& zt, const Array& v, double sigma) {
            return to_array(diffusion::denoised_estimate(LatentClip(to_tensor(zt), sigma), {to_tensor(v), sigma}).latents());
        },
        py::arg("zt"), py::arg("v"), py::arg("sigma"));
    m.def(
        "diffusion_loss", [](const Array& z0_hat, const Array& z0, double sigma) {
            return diffusion::diffusion_loss(LatentClip(to_tensor(z0_hat), 0.0), LatentClip(to_tensor(z0), 0.0), sigma);
        },
        py::arg("z0_hat"), py::arg("z0"), py::arg("sigma"));

    m.def(
        "build_mask",
        [](const std::vector<std::vector<py::sequence>>& boxes, std::size_t grid_h, std::size_t grid_w, std::size_t patch_size,
           const std::string& loss_json) {
            const auto cfg = loss::loss_config_from_json(parse(loss_json));
            return to_array(loss::build_mask(to_track(boxes), grid_h, grid_w, patch_size, cfg.mask).weights());
        },
        py::arg("boxes"), py::arg("grid_h"), py::arg("grid_w"), py::arg("patch_size"), py::arg("loss_config") = "");
    m.def(
        "feature_consistency_loss",
        [](const Array& f_gt, const Array& f_gen, const Array& mask, double alpha, const std::string& application) {
            const std::size_t p = 1;
            return loss::feature_consistency_loss(FeatureGrid(to_tensor(f_gt), p), FeatureGrid(to_tensor(f_gen), p),
                                                  PatchMask(to_tensor(mask), alpha), loss::parse_mask_application(application));
        },
        py::arg("f_gt"), py::arg("f_gen"), py::arg("mask"), py::arg("alpha"), py::arg("application") = "pre-square");
    m.def("combined_loss", [](double l_diff, double l_feat, double diffusion_weight, double lambda_feat) {
        loss::LossConfig c;
        c.diffusion_weight = diffusion_weight;
        c.lambda_feat = lambda_feat;
        return loss::combined_loss(l_diff, l_feat, c).total;
    });

    m.def(
        "iou", [](const py::sequence& a, const py::sequence& b) { return eval::iou(to_box(a), to_box(b)); }, py::arg("a"), py::arg("b"));
    m.def(
        "frechet_distance",
        [](const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
            return eval::frechet_distance(eval::gaussian_stats(a), eval::gaussian_stats(b));
        },
        py::arg("samples_a"), py::arg("samples_b"));

    m.def(
        "generate_scene",
        [](const std::string& spec_json, std::size_t frames, std::size_t height, std::size_t width) {
            const auto [clip, boxes] = scenes::generate_clip(scenes::scene_spec_from_json(parse(spec_json)), frames, height, width);
            return py::make_tuple(to_array(clip.frames()), from_track(boxes));
        },
        py::arg("spec"), py::arg("frames"), py::arg("height"), py::arg("width"));
    m.def(
        "sample_scene_spec", [](std::uint64_t seed) { return scenes::to_json(scenes::sample_spec(scenes::SceneDistribution{}, seed)).dump(); },
        py::arg("seed"));

    m.def("default_config", [] { return config::to_json(config::default_config()).dump(); });
    m.def(
        "resolve_config", [](const std::string& config_json) { return config::to_json(run_config(config_json)).dump(); }, py::arg("config"));
    m.def(
        "make_data",
        [](const std::string& cfg, bool force, const std::optional<std::function<void(const std::string&)>>& log) {
            return scenes::to_json(commands::make_data(run_config(cfg), force, py_logger(log))).dump();
        },
        py::arg("config"), py::arg("force") = false, py::arg("log") = py::none());
    m.def(
        "pretrain_codec",
        [](const std::string& cfg, const std::optional<std::function<void(const std::string&)>>& log) {
            const auto r = commands::pretrain_codec(run_config(cfg), py_logger(log));
            return std::make_pair(r.final_recon_mse, r.latent_scale);
        },
        py::arg("config"), py::arg("log") = py::none());
    m.def(
        "train",
        [](const std::string& cfg, const std::optional<std::function<void(const std::string&)>>& log) {
            return commands::train(run_config(cfg), {}, py_logger(log)).final_dir;
        },
        py::arg("config"), py::arg("log") = py::none());
    m.def(
        "generate",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
           const std::string& cfg, const std::string& split) {
            commands::generate(checkpoint, manifest, out_dir, run_config(cfg), split);
        },
        py::arg("checkpoint"), py::arg("manifest"), py::arg("out_dir"), py::arg("config"), py::arg("split") = "test");
    m.def(
        "evaluate",
        [](const std::filesystem::path& generated, const std::filesystem::path& manifest, const std::string& cfg,
           const std::filesystem::path& report, const std::filesystem::path& csv, const std::string& split) {
            return eval::to_json(commands::evaluate(generated, manifest, run_config(cfg), report, csv, split)).dump();
        },
        py::arg("generated"), py::arg("manifest"), py::arg("config"), py::arg("report"), py::arg("csv") = std::filesystem::path{},
        py::arg("split") = "test");
    m.def(
        "run_ablation",
        [](const std::string& cfg, const std::optional<std::function<void(const std::string&)>>& log) {
            return commands::run_ablation(run_config(cfg), py_logger(log)).to_json().dump();
        },
        py::arg("config"), py::arg("log") = py::none());
}
