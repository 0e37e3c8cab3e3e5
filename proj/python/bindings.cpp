#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <fstream>
#include <map>
#include <optional>

#include "attrgan/data.hpp"
#include "attrgan/errors.hpp"
#include "attrgan/losses.hpp"
#include "attrgan/metrics.hpp"
#include "attrgan/service.hpp"
#include "attrgan/training.hpp"

namespace py = pybind11;
using namespace attrgan;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  nn::Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
  return Tensor::from(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Eigen::MatrixXd to_matrix(const Array& a) {
  if (a.ndim() != 2) fail(ErrorCode::kShapeMismatch, "expected a 2-d array");
  Eigen::MatrixXd m(a.shape(0), a.shape(1));
  for (py::ssize_t r = 0; r < a.shape(0); ++r)
    for (py::ssize_t c = 0; c < a.shape(1); ++c) m(r, c) = a.at(r, c);
  return m;
}

Vocabularies make_vocab(const std::vector<std::string>& categories, const std::vector<std::string>& attributes) {
  return {Vocabulary(categories), Vocabulary(attributes)};
}

LossParts make_parts(const std::map<std::string, double>& d) {
  LossParts p;
  const std::map<std::string, double*> fields{{"adv_img", &p.adv_img},     {"adv_obj", &p.adv_obj},
                                              {"obj_cls", &p.obj_cls},     {"attr_cls", &p.attr_cls},
                                              {"kl", &p.kl},               {"img_recon", &p.img_recon},
                                              {"latent_recon", &p.latent_recon}};
  for (const auto& [k, v] : d) {
    auto it = fields.find(k);
    if (it == fields.end()) fail(ErrorCode::kInvalidArgument, "unknown loss part '" + k + "'");
    *it->second = v;
  }
  return p;
}

py::array_t<std::uint8_t> rgb_array(const Rgb8& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, 3});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attribute-guided layout-to-image generation";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      PyErr_SetObject(exc.ptr(), py::make_tuple(std::string(error_code_name(e.code())), e.what()).ptr());
    }
  });

  m.def("synthetic_vocabularies", [] {
    const Vocabularies v = synthetic_vocabularies();
    return py::make_tuple(v.categories.names(), v.attributes.names());
  });
  m.def("normalize_layout",
        [](const std::string& text, const std::vector<std::string>& categories,
           const std::vector<std::string>& attributes) {
          const Vocabularies v = make_vocab(categories, attributes);
          return serialize_layout(parse_layout(text, v), v);
        },
        "Parse, validate and re-serialize a layout file.");
  m.def("shift_layout",
        [](const std::string& text, const std::vector<std::string>& categories,
           const std::vector<std::string>& attributes, const std::vector<double>& dx, const std::string& policy) {
          const Vocabularies v = make_vocab(categories, attributes);
          ShiftSpec s{dx, policy == "reject" ? ShiftPolicy::kReject : ShiftPolicy::kClamp};
          if (policy != "reject" && policy != "clamp") fail(ErrorCode::kInvalidArgument, "policy: clamp | reject");
          return serialize_layout(shift_layout(parse_layout(text, v), s), v);
        });
  m.def("render_synthetic", [](const std::string& text) {
    return rgb_array(render_synthetic(parse_layout(text, synthetic_vocabularies())));
  });
  m.def("sample_synthetic_layout", [](const std::string& spec, std::uint64_t seed) {
    Rng rng(seed);
    const SyntheticSpec s = spec.empty() ? SyntheticSpec{} : parse_synthetic_spec(spec);
    return serialize_layout(sample_synthetic_layout(s, rng), synthetic_vocabularies());
  }, py::arg("spec") = "", py::arg("seed") = 0);
  m.def("generate_synthetic_dataset",
        [](const std::string& spec, int n, const std::string& out) {
          const SyntheticSpec s = spec.empty() ? SyntheticSpec{} : parse_synthetic_spec(spec);
          py::gil_scoped_release release;
          const Dataset d = generate_synthetic_dataset(s, n, out);
          return std::map<std::string, int>{{"train", static_cast<int>(d.split(Split::kTrain).size())},
                                            {"val", static_cast<int>(d.split(Split::kVal).size())},
                                            {"test", static_cast<int>(d.split(Split::kTest).size())}};
        });

  m.def("kl_loss", [](const Array& mu, const Array& logvar) { return kl_loss(to_tensor(mu), to_tensor(logvar)).item(); });
  m.def("image_recon_loss",
        [](const Array& a, const Array& b) { return image_recon_loss(to_tensor(a), to_tensor(b)).item(); });
  m.def("latent_recon_loss", [](const Array& z, const Array& zr, const Array& zs) {
    return latent_recon_loss(to_tensor(z), to_tensor(zr), to_tensor(zs)).item();
  });
  m.def("obj_class_loss", [](const Array& logits, const std::vector<int>& labels) {
    return obj_class_loss(to_tensor(logits), labels).item();
  });
  m.def("attr_class_loss", [](const Array& logits, const Array& targets, const std::vector<double>& weights) {
    return attr_class_loss(to_tensor(logits), to_tensor(targets), weights).item();
  });
  m.def("generator_total", [](const std::map<std::string, double>& parts) {
    return generator_total(make_parts(parts), LossWeights{});
  });
  m.def("discriminator_total", [](const std::map<std::string, double>& parts) {
    return discriminator_total(make_parts(parts), LossWeights{});
  });

  m.def("frechet_distance", [](const Array& a, const Array& b) {
    const FrechetResult r = frechet_distance(to_matrix(a), to_matrix(b));
    return py::make_tuple(r.distance, r.regularized);
  });
  m.def("object_accuracy", [](const Array& logits, const std::vector<int>& labels) {
    return object_accuracy(to_tensor(logits), labels);
  });
  m.def("attribute_recall_precision",
        [](const Array& logits, const std::vector<std::vector<int>>& truth, double threshold) {
          const RecallPrecision r = attribute_recall_precision(to_tensor(logits), truth, threshold);
          return py::make_tuple(r.recall, r.precision);
        },
        py::arg("logits"), py::arg("truth"), py::arg("threshold") = 0.5);

  m.def("train",
        [](const std::string& data_dir, const std::string& out_dir, const std::string& preset,
           const std::string& config) {
          const Dataset d = load_dataset(data_dir);
          TrainingConfig cfg = preset_training(preset);
          if (!config.empty()) cfg = parse_training_config(config, cfg);
          cfg.model.num_categories = d.vocab.categories.size();
          cfg.model.num_attributes = d.vocab.attributes.size();
          py::gil_scoped_release release;
          const auto examples = load_examples(d, Split::kTrain);
          std::filesystem::create_directories(out_dir);
          Trainer t(cfg, d.vocab, d.prior);
          std::ofstream log(std::filesystem::path(out_dir) / "metrics.jsonl");
          t.train(examples, out_dir, log);
        },
        py::arg("data_dir"), py::arg("out_dir"), py::arg("preset") = "desk", py::arg("config") = "");

  py::class_<Service>(m, "Service")
      .def(py::init([](const std::string& checkpoint, const std::optional<std::string>& classifier) {
             auto model = load_served_model(
                 checkpoint, classifier ? std::optional<std::filesystem::path>(*classifier) : std::nullopt);
             return std::make_unique<Service>(std::move(model));
           }),
           py::arg("checkpoint"), py::arg("classifier") = py::none())
      .def("handle",
           [](const Service& s, const std::string& method, const std::string& path, const std::string& body) {
             Service::Response r;
             {
               py::gil_scoped_release release;
               r = s.handle(method, path, body);
             }
             return py::make_tuple(r.status, r.body);
           },
           py::arg("method"), py::arg("path"), py::arg("body") = "");
}
