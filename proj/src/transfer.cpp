#include "sonarzoo/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "sonarzoo/csv.hpp"
#include "sonarzoo/errors.hpp"
#include "sonarzoo/runtime.hpp"
#include "sonarzoo/serialize.hpp"

namespace sonarzoo {

FeatureMatrix extract_features(const ModelGraph& g, const std::string& layer,
                               const ImageDataset& ds, std::int64_t batch) {
    if (ds.size() == 0) throw ConfigError("feature extraction needs a non-empty dataset");
    if (batch < 1) throw ConfigError("batch size must be at least 1");
    if (ds.image_size != g.meta.input_size)
        throw ConfigError("dataset is " + std::to_string(ds.image_size) + "px but the model wants " +
                          std::to_string(g.meta.input_size) + "px");
    const int id = g.require(layer);

    FeatureMatrix out;
    out.layer = layer;
    out.model_id = g.meta.family + "-w" + std::to_string(g.meta.width_param);
    out.rows = ds.size();
    out.labels = ds.labels;

    const std::int64_t n = ds.size();
    for (std::int64_t start = 0; start < n; start += batch) {
        const std::int64_t stop = std::min(n, start + batch);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(stop - start));
        std::iota(idx.begin(), idx.end(), start);
        Tensor x = batch_tensor(ds, idx);
        normalize_inplace(x, g.meta.pixel_mean);
        const Tensor act = forward_collect(g, x, {id})[0];

        const std::int64_t cols = act.size() / act.dim(0);
        if (out.cols == 0) {
            out.cols = cols;
            out.data.resize(static_cast<std::size_t>(out.rows * cols));
        }
        std::copy(act.data(), act.data() + act.size(), out.data.data() + start * cols);
    }
    return out;
}

double compute_auscc(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw ConfigError("area needs at least two curve points");
    for (std::size_t i = 1; i < points.size(); ++i)
        if (points[i].first <= points[i - 1].first)
            throw ConfigError("curve points must have strictly increasing x");
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += 0.5 * (points[i].second + points[i - 1].second) *
                (points[i].first - points[i - 1].first);
    return area / (points.back().first - points.front().first);
}

SampleComplexityCurve run_lowshot(const FeatureMatrix& train, const FeatureMatrix& test,
                                  const std::vector<std::int64_t>& spc_list, std::int64_t runs,
                                  std::uint64_t seed, const SvmConfig& svm) {
    if (spc_list.empty()) throw ConfigError("no sample counts given");
    if (runs < 1) throw ConfigError("need at least one run");
    if (train.cols != test.cols)
        throw ShapeError("train and test feature dims differ: " + std::to_string(train.cols) +
                         " vs " + std::to_string(test.cols));
    for (std::size_t i = 1; i < spc_list.size(); ++i)
        if (spc_list[i] <= spc_list[i - 1])
            throw ConfigError("sample counts must be strictly increasing");

    std::int64_t classes = 0;
    for (std::int64_t l : train.labels) classes = std::max(classes, l + 1);
    for (std::int64_t l : test.labels) classes = std::max(classes, l + 1);

    SampleComplexityCurve curve;
    curve.runs = runs;
    for (std::int64_t spc : spc_list) {
        CurvePoint pt;
        pt.spc = spc;
        for (std::int64_t r = 0; r < runs; ++r) {
            SeededRng rng(SeededRng::derive(seed, static_cast<std::uint64_t>(spc),
                                            static_cast<std::uint64_t>(r)));
            std::int64_t shortfall = 0;
            const auto picked = lowshot_indices(train.labels, classes, spc, rng, &shortfall);
            pt.shortfall += shortfall;

            FeatureMatrix sub;
            sub.rows = static_cast<std::int64_t>(picked.size());
            sub.cols = train.cols;
            sub.data.resize(static_cast<std::size_t>(sub.rows * sub.cols));
            for (std::int64_t i = 0; i < sub.rows; ++i) {
                const std::int64_t src = picked[static_cast<std::size_t>(i)];
                std::copy(train.row(src), train.row(src) + train.cols, sub.row(i));
                sub.labels.push_back(train.labels[static_cast<std::size_t>(src)]);
            }
            const SvmModel model = train_linear_svm(sub, svm);
            pt.runs.push_back(svm_accuracy(model, test));
        }
        const double nn = static_cast<double>(pt.runs.size());
        pt.mean = std::accumulate(pt.runs.begin(), pt.runs.end(), 0.0) / nn;
        double var = 0.0;
        for (double v : pt.runs) var += (v - pt.mean) * (v - pt.mean);
        pt.stddev = std::sqrt(var / nn);
        curve.points.push_back(std::move(pt));
    }

    if (curve.points.size() >= 2) {
        std::vector<std::pair<double, double>> xy;
        for (const auto& pt : curve.points)
            xy.emplace_back(static_cast<double>(pt.spc), pt.mean);
        curve.auscc = compute_auscc(xy);
    } else {
        curve.auscc = curve.points.front().mean;
    }
    return curve;
}

std::string lowshot_csv(const SampleComplexityCurve& curve) {
    std::string csv = "spc;accuracy;std\n";
    for (const auto& pt : curve.points)
        csv += format_int(pt.spc) + ";" + format_fixed(pt.mean * 100.0, 4) + ";" +
               format_fixed(pt.stddev * 100.0, 4) + "\n";
    return csv;
}

std::string lowshot_json(const SampleComplexityCurve& curve, const std::string& model_id,
                         const std::string& layer) {
    nlohmann::json j;
    j["model"] = model_id;
    j["layer"] = layer;
    j["runs"] = curve.runs;
    j["auscc_percent"] = curve.auscc * 100.0;
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& pt : curve.points) {
        nlohmann::json p;
        p["spc"] = pt.spc;
        p["accuracy_percent"] = pt.mean * 100.0;
        p["std_percent"] = pt.stddev * 100.0;
        p["run_accuracy"] = pt.runs;
        if (pt.shortfall > 0) p["shortfall"] = pt.shortfall;
        pts.push_back(std::move(p));
    }
    j["points"] = std::move(pts);
    return j.dump(2) + "\n";
}

namespace {

constexpr char kFeatMagic[8] = {'S', 'Z', 'F', 'E', 'A', 'T', 'S', '1'};

} // namespace

void save_features(const FeatureMatrix& f, const std::string& path) {
    if (f.rows < 0 || f.cols < 0 || f.data.size() != static_cast<std::size_t>(f.rows * f.cols))
        throw ShapeError("feature matrix data does not match rows*cols");
    if (f.labels.size() != static_cast<std::size_t>(f.rows))
        throw ShapeError("feature matrix has " + std::to_string(f.rows) + " rows but " +
                         std::to_string(f.labels.size()) + " labels");

    nlohmann::json header;
    header["format_version"] = 1;
    header["rows"] = f.rows;
    header["cols"] = f.cols;
    header["layer"] = f.layer;
    header["model_id"] = f.model_id;
    header["labels"] = f.labels;
    const std::string header_text = header.dump();

    std::string buf(kFeatMagic, sizeof kFeatMagic);
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<char>((header_text.size() >> (8 * i)) & 0xFF));
    buf += header_text;
    const std::size_t off = buf.size();
    buf.resize(off + f.data.size() * 4);
    std::memcpy(buf.data() + off, f.data.data(), f.data.size() * 4);
    const std::uint32_t crc = crc32(buf.data(), buf.size());
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((crc >> (8 * i)) & 0xFF));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

FeatureMatrix load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kFeatMagic) + 12) throw IoError("feature file truncated: " + path);
    if (std::memcmp(buf.data(), kFeatMagic, sizeof kFeatMagic) != 0)
        throw IoError("not a feature file: " + path);

    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(buf[buf.size() - 4 + static_cast<std::size_t>(i)]))
                  << (8 * i);
    if (crc32(buf.data(), buf.size() - 4) != stored)
        throw IoError("feature file checksum mismatch: " + path);

    std::uint64_t header_len = 0;
    for (int i = 0; i < 8; ++i)
        header_len |= static_cast<std::uint64_t>(
                          static_cast<unsigned char>(buf[sizeof(kFeatMagic) + static_cast<std::size_t>(i)]))
                      << (8 * i);
    std::size_t pos = sizeof(kFeatMagic) + 8;
    if (pos + header_len > buf.size() - 4) throw IoError("feature file truncated: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad feature header in " + path + ": " + e.what());
    }
    pos += header_len;
    if (header.at("format_version").get<int>() != 1)
        throw IoError("unsupported feature format version");

    FeatureMatrix f;
    f.rows = header.at("rows").get<std::int64_t>();
    f.cols = header.at("cols").get<std::int64_t>();
    f.layer = header.at("layer").get<std::string>();
    f.model_id = header.at("model_id").get<std::string>();
    f.labels = header.at("labels").get<std::vector<std::int64_t>>();
    if (f.rows < 0 || f.cols < 0 || f.labels.size() != static_cast<std::size_t>(f.rows))
        throw IoError("inconsistent feature header in " + path);

    const std::size_t want = static_cast<std::size_t>(f.rows * f.cols) * 4;
    if (buf.size() - 4 - pos != want) throw IoError("feature blob size mismatch in " + path);
    f.data.resize(static_cast<std::size_t>(f.rows * f.cols));
    std::memcpy(f.data.data(), buf.data() + pos, want);
    return f;
}

} // namespace sonarzoo
