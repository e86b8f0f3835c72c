// Python bindings: configuration, the run() pipeline, losses, metrics and a
// trained-model handle. Arrays cross as float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dclp/app.hpp"
#include "dclp/contrastive.hpp"
#include "dclp/dataset.hpp"
#include "dclp/encoders.hpp"
#include "dclp/image.hpp"
#include "dclp/metrics.hpp"
#include "dclp/trainer.hpp"

namespace py = pybind11;
using namespace dclp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array a(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

ConfusionMatrix to_matrix(const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw ShapeError("confusion matrix must be square");
    ConfusionMatrix cm(static_cast<std::size_t>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), cm.counts.begin());
    return cm;
}

py::dict auc_dict(const AucResult& auc) {
    py::list per;
    for (const auto& v : auc.per_class) per.append(v ? py::object(py::float_(*v)) : py::object(py::none()));
    py::dict d;
    d["macro"] = auc.macro;
    d["per_class"] = per;
    d["skipped"] = auc.skipped;
    return d;
}

py::dict report_dict(const ClassReport& r) {
    py::list per;
    for (const auto& m : r.per_class) {
        py::dict c;
        c["precision"] = m.precision;
        c["recall"] = m.recall;
        c["f1"] = m.f1;
        c["support"] = m.support;
        per.append(c);
    }
    auto avg = [](const AveragedMetrics& a) {
        py::dict d;
        d["precision"] = a.precision;
        d["recall"] = a.recall;
        d["f1"] = a.f1;
        return d;
    };
    py::dict d;
    d["per_class"] = per;
    d["macro"] = avg(r.macro);
    d["weighted"] = avg(r.weighted);
    d["accuracy"] = r.accuracy;
    d["mcc"] = r.mcc;
    d["total"] = r.total;
    if (r.auc) d["auc"] = auc_dict(*r.auc);
    return d;
}

std::string config_value(const RunConfig& cfg, const std::string& key) {
    for (const auto& [k, v] : parse_key_values(cfg.to_text(), "<config>"))
        if (k == key) return v;
    throw UsageError("unknown config key '" + key + "'");
}

RunConfig make_config(const std::string& profile, const py::kwargs& overrides) {
    std::vector<std::string> flags{"profile=" + profile};
    for (const auto& [k, v] : overrides) {
        std::string value = py::str(v);
        if (py::isinstance<py::bool_>(v)) value = v.cast<bool>() ? "true" : "false";
        flags.push_back(k.cast<std::string>() + "=" + value);
    }
    return parse_config("", flags);
}

py::dict history_row(const EpochRecord& r) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["loss"] = r.mean_loss;
    d["train_accuracy"] = r.train_accuracy;
    return d;
}

}  // namespace

PYBIND11_MODULE(_dclp, m) {
    m.doc() = "Dual-encoder contrastive emoticon classifier";

    // exception hierarchy mirrors the CLI exit-code families; handles are
    // leaked on purpose so nothing is released after interpreter shutdown
    static PyObject* base = py::exception<Error>(m, "DclpError", PyExc_RuntimeError).release().ptr();
    static PyObject* usage = py::exception<Error>(m, "UsageError", base).release().ptr();
    static PyObject* data = py::exception<Error>(m, "DataError", base).release().ptr();
    static PyObject* io = py::exception<Error>(m, "IoError", base).release().ptr();
    static PyObject* numeric = py::exception<Error>(m, "NumericError", base).release().ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyObject* type = base;
            switch (e.kind()) {
                case ErrorKind::Usage: type = usage; break;
                case ErrorKind::Data: type = data; break;
                case ErrorKind::Io: type = io; break;
                case ErrorKind::Numeric: type = numeric; break;
                default: break;
            }
            PyErr_SetString(type, e.what());
        }
    });

    py::class_<RunConfig>(m, "Config")
        .def(py::init(&make_config), py::arg("profile") = "desk")
        .def_static("from_file",
                    [](const std::string& path, const std::vector<std::string>& flags) { return parse_config(path, flags); },
                    py::arg("path"), py::arg("flags") = std::vector<std::string>{})
        .def_static("from_text", &parse_config_text)
        .def("set", [](RunConfig& c, const std::string& k, const std::string& v) { apply_setting(c, k, v); })
        .def("get", &config_value)
        .def("to_text", &RunConfig::to_text)
        .def("validate", &RunConfig::validate)
        .def("keys", [](const RunConfig&) { return config_keys(); })
        .def("__repr__", [](const RunConfig& c) { return "<Config profile=" + c.profile + ">"; });

    m.def("run", [](const std::string& sub, const RunConfig& cfg) {
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = run(sub, cfg, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("subcommand"), py::arg("config"), "Runs a CLI subcommand; returns (exit_code, stdout, stderr).");

    m.def("gradcheck", [](const RunConfig& cfg) {
        GradCheckReport r;
        {
            py::gil_scoped_release release;
            r = run_gradcheck(cfg);
        }
        py::list groups;
        for (const auto& e : r.entries) {
            py::dict g;
            g["name"] = e.name;
            g["checked"] = e.checked;
            g["max_error"] = e.max_error;
            g["passed"] = e.passed;
            groups.append(g);
        }
        py::dict d;
        d["passed"] = r.passed;
        d["max_error"] = r.max_error;
        d["groups"] = groups;
        return d;
    }, py::arg("config"));

    // data
    m.def("generate_synthetic", [](const std::string& dir, std::size_t n_per_class, std::uint64_t seed,
                                   std::size_t image_size, double noise) {
        SynthOptions o;
        o.n_per_class = n_per_class;
        o.seed = seed;
        o.image_size = image_size;
        o.noise = noise;
        return generate_synthetic(dir, o).records.size();
    }, py::arg("dir"), py::arg("n_per_class") = 40, py::arg("seed") = 0, py::arg("image_size") = 32,
       py::arg("noise") = 0.05, "Writes a synthetic dataset; returns the record count.");
    m.def("load_image", [](const std::string& path) { return to_array(load_image(path)); });
    m.def("preprocess", [](const Array& raw, std::size_t target) { return to_array(preprocess(to_tensor(raw), target)); });
    m.def("patchify", [](const Array& image, std::size_t p) { return to_array(patchify(to_tensor(image), p)); });

    // contrastive
    m.def("l2_normalize", [](const std::vector<double>& v) { return l2_normalize(v); });
    m.def("cosine_similarity", [](const std::vector<double>& a, const std::vector<double>& b) {
        return cosine_similarity(a, b);
    });
    m.def("similarity_logits", [](const Array& y, const Array& z, double temperature) {
        ContrastiveConfig cc;
        cc.temperature = temperature;
        return to_array(similarity_logits(to_tensor(y), to_tensor(z), cc));
    }, py::arg("y"), py::arg("z"), py::arg("temperature") = 0.1);
    m.def("contrastive_loss", [](const Array& logits) { return contrastive_loss(to_tensor(logits)); });

    // metrics
    m.def("confusion_matrix", [](const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred, std::size_t k) {
        const ConfusionMatrix cm = confusion_matrix(gold, pred, k);
        py::array_t<std::uint64_t> a({static_cast<py::ssize_t>(k), static_cast<py::ssize_t>(k)});
        std::copy(cm.counts.begin(), cm.counts.end(), a.mutable_data());
        return a;
    }, py::arg("gold"), py::arg("pred"), py::arg("k") = kNumClasses);
    m.def("class_report", [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& cm) {
        return report_dict(class_report(to_matrix(cm)));
    });
    m.def("mcc", [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& cm) {
        return mcc(to_matrix(cm));
    });
    m.def("roc_auc_ovr", [](const std::vector<std::size_t>& gold, const std::vector<std::vector<double>>& probs) {
        return auc_dict(roc_auc_ovr(gold, probs));
    });

    // trained models
    py::class_<Model>(m, "Model")
        .def_static("load", [](const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); })
        .def_property_readonly("config", [](const Model& md) { return md.config; })
        .def_property_readonly("parameter_count", [](const Model& md) { return parameter_count(md.params); })
        .def("predict", [](const Model& md, const Array& image, const std::string& text) {
            const Prediction p = predict(md, to_tensor(image), text);
            py::dict d;
            d["label"] = p.label;
            d["probs"] = p.probs;
            d["image_embedding"] = p.image_embedding;
            d["text_embedding"] = p.text_embedding;
            return d;
        }, py::arg("image"), py::arg("text"), "Image is H x W x 3 in [-1, 1] at the model's image size.")
        .def("evaluate", [](const Model& md, const std::string& manifest) {
            EvalResult r;
            {
                py::gil_scoped_release release;
                r = evaluate(md, load_examples(load_manifest(manifest), md.config.model.visual.image_size));
            }
            py::dict d;
            d["ids"] = r.ids;
            d["gold"] = r.gold;
            d["predicted"] = r.predicted;
            d["probs"] = r.probs;
            d["accuracy"] = r.accuracy();
            return d;
        });

    m.def("train", [](const std::string& manifest, const RunConfig& cfg) {
        TrainState state;
        {
            py::gil_scoped_release release;
            const Manifest mf = load_manifest(manifest);
            state = train(load_examples(mf, cfg.model.visual.image_size), cfg);
        }
        py::list history;
        for (const auto& r : state.history) history.append(history_row(r));
        return py::make_tuple(state.model, history);
    }, py::arg("manifest"), py::arg("config"), "Trains on every record of the manifest; returns (model, history).");
}
