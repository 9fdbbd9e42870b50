#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "propwatch/cli.hpp"
#include "propwatch/embeddings.hpp"
#include "propwatch/error.hpp"
#include "propwatch/features.hpp"
#include "propwatch/timeutil.hpp"

namespace py = pybind11;
using namespace propwatch;

namespace {

py::array_t<float> to_array(const Vector& v) {
    py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::tuple load(const std::filesystem::path& path) {
    auto store = load_store(path);
    py::array_t<float> m({static_cast<py::ssize_t>(store.size()), static_cast<py::ssize_t>(store.dim())});
    float* dst = m.mutable_data();
    for (const auto& id : store.ids()) {
        auto v = *store.get(id);
        dst = std::copy(v.begin(), v.end(), dst);
    }
    return py::make_tuple(store.ids(), m, store.provenance());
}

void save(const std::filesystem::path& path, const std::vector<std::string>& ids,
          py::array_t<float, py::array::c_style | py::array::forcecast> vectors, const std::string& provenance) {
    if (vectors.ndim() != 2 || static_cast<std::size_t>(vectors.shape(0)) != ids.size())
        fail(ErrorKind::usage, "vectors must be a (len(ids), dim) matrix");
    const auto dim = static_cast<std::size_t>(vectors.shape(1));
    EmbeddingStore store(dim, provenance);
    for (std::size_t i = 0; i < ids.size(); ++i) store.add(ids[i], {vectors.data(static_cast<py::ssize_t>(i), 0), dim});
    save_store(store, path);
}

std::vector<double> features(const std::string& text, const std::string& timestamp,
                             const std::optional<std::string>& trigger_timestamp) {
    Message m;
    m.channel_id = "c";
    m.message_id = 1;
    m.timestamp = parse_iso8601(timestamp);
    m.text = text;
    std::optional<Message> trig;
    if (trigger_timestamp) {
        trig = Message{};
        trig->channel_id = "c";
        trig->timestamp = parse_iso8601(*trigger_timestamp);
    }
    auto v = extract(m, trig ? &*trig : nullptr).values();
    return {v.begin(), v.end()};
}

py::tuple run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
        py::gil_scoped_release release;
        code = dispatch(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bindings for the propwatch core library";

    static py::exception<Error> base(m, "PropwatchError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            switch (e.kind()) {
                case ErrorKind::usage:
                case ErrorKind::data: PyErr_SetString(PyExc_ValueError, e.what()); return;
                case ErrorKind::io: PyErr_SetString(PyExc_OSError, e.what()); return;
                default: py::set_error(base, e.what());
            }
        }
    });

    m.def("hash_embed", [](const std::string& text, std::size_t dim) { return to_array(hash_embed(text, dim)); },
          py::arg("text"), py::arg("dim") = kHashEmbedDim, "L2-normalized signed hash of character 3-grams");
    m.def("load_store", &load, py::arg("path"), "Reads a TGEMB1 file as (ids, float32 matrix, provenance)");
    m.def("save_store", &save, py::arg("path"), py::arg("ids"), py::arg("vectors"), py::arg("provenance"),
          "Writes ids and a (n, dim) matrix as a TGEMB1 file");
    m.def("features", &features, py::arg("text"), py::arg("timestamp"), py::arg("trigger_timestamp") = py::none(),
          "The eight handcrafted features of one message");
    m.def("feature_names", [] {
        const auto& n = feature_names();
        return std::vector<std::string>(n.begin(), n.end());
    });
    m.def("run", &run, py::arg("args"), "Runs the command line tool in-process; returns (exit code, stdout, stderr)");
    m.attr("HASH_EMBED_DIM") = kHashEmbedDim;
    m.attr("__version__") = tool_version();
}
