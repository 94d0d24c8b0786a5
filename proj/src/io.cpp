#include "rvdr/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "rvdr/errors.hpp"

namespace rvdr {

namespace fs = std::filesystem;

size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::kF32: return 4;
        case Dtype::kF64: return 8;
        case Dtype::kU8: return 1;
        case Dtype::kU16: return 2;
    }
    throw DataError("tensor: unknown dtype");
}

size_t TensorData::element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xff));
    out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const void* data, size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(static_cast<const char*>(data), std::streamsize(size));
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace

std::vector<uint8_t> encode_tensor(const TensorData& t) {
    if (t.dims.size() > 255) throw DataError("tensor: rank too large");
    if (t.payload.size() != t.element_count() * dtype_size(t.dtype))
        throw DataError("tensor: payload size mismatch");
    std::vector<uint8_t> out;
    out.reserve(8 + 4 * t.dims.size() + t.payload.size());
    out.insert(out.end(), {'R', 'V', 'T', '1'});
    out.push_back(uint8_t(t.dtype));
    out.push_back(uint8_t(t.dims.size()));
    put_u16(out, 0);  // reserved
    for (uint32_t d : t.dims) put_u32(out, d);
    out.insert(out.end(), t.payload.begin(), t.payload.end());
    return out;
}

TensorData decode_tensor(const uint8_t* data, size_t size) {
    if (size < 8 || std::memcmp(data, "RVT1", 4) != 0) throw DataError("tensor: bad magic");
    TensorData t;
    if (data[4] > 3) throw DataError("tensor: bad dtype code");
    t.dtype = Dtype(data[4]);
    const size_t rank = data[5];
    if (data[6] != 0 || data[7] != 0) throw DataError("tensor: reserved bytes not zero");
    if (size < 8 + 4 * rank) throw DataError("tensor: truncated header");
    t.dims.resize(rank);
    for (size_t i = 0; i < rank; ++i) t.dims[i] = get_u32(data + 8 + 4 * i);
    const size_t expect = t.element_count() * dtype_size(t.dtype);
    if (size != 8 + 4 * rank + expect) throw DataError("tensor: payload size mismatch");
    t.payload.assign(data + 8 + 4 * rank, data + size);
    return t;
}

void write_tensor(const std::string& path, const TensorData& t) {
    const std::vector<uint8_t> bytes = encode_tensor(t);
    write_file(path, bytes.data(), bytes.size());
}

TensorData read_tensor(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    return decode_tensor(bytes.data(), bytes.size());
}

void write_depth_rvt(const std::string& path, const DepthImage& d) {
    TensorData t;
    t.dtype = Dtype::kF32;
    t.dims = {uint32_t(d.height), uint32_t(d.width)};
    t.payload.resize(d.size() * 4);
    for (size_t i = 0; i < d.size(); ++i) {
        const float f = float(d.values[i]);
        std::memcpy(t.payload.data() + 4 * i, &f, 4);
    }
    write_tensor(path, t);
}

DepthImage read_depth_rvt(const std::string& path) {
    const TensorData t = read_tensor(path);
    if (t.dtype != Dtype::kF32 || t.dims.size() != 2) throw DataError("depth tensor: bad shape");
    DepthImage d(int(t.dims[0]), int(t.dims[1]));
    for (size_t i = 0; i < d.size(); ++i) {
        float f;
        std::memcpy(&f, t.payload.data() + 4 * i, 4);
        d.values[i] = double(f);
    }
    return d;
}

void write_mask_rvt(const std::string& path, const Mask& m) {
    TensorData t;
    t.dtype = Dtype::kU8;
    t.dims = {uint32_t(m.height), uint32_t(m.width)};
    t.payload = m.values;
    write_tensor(path, t);
}

Mask read_mask_rvt(const std::string& path) {
    const TensorData t = read_tensor(path);
    if (t.dtype != Dtype::kU8 || t.dims.size() != 2) throw DataError("mask tensor: bad shape");
    Mask m(int(t.dims[0]), int(t.dims[1]));
    m.values = t.payload;
    return m;
}

// ---------------------------------------------------------------------------

void write_ppm(const std::string& path, const RgbImage& img) {
    std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                         "\n255\n";
    std::vector<uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + size_t(img.width) * img.height * 3);
    for (int p = 0; p < img.width * img.height; ++p)
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(img.m(c, p), 0.0, 1.0);
            bytes.push_back(uint8_t(std::lround(v * 255.0)));
        }
    write_file(path, bytes.data(), bytes.size());
}

RgbImage read_ppm(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    // Parse "P6\n<w> <h>\n<max>\n".
    size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(char(bytes[pos++]));
        return t;
    };
    if (token() != "P6") throw DataError("ppm: bad magic: " + path);
    const int w = std::stoi(token()), h = std::stoi(token()), maxval = std::stoi(token());
    if (maxval != 255) throw DataError("ppm: unsupported maxval");
    ++pos;  // single whitespace after maxval
    if (bytes.size() - pos != size_t(w) * h * 3) throw DataError("ppm: payload size mismatch");
    RgbImage img(h, w);
    for (int p = 0; p < w * h; ++p)
        for (int c = 0; c < 3; ++c) img.m(c, p) = double(bytes[pos + size_t(p) * 3 + c]) / 255.0;
    return img;
}

// ---------------------------------------------------------------------------

void write_scene(const std::string& scene_dir, const SceneRecord& scene) {
    fs::create_directories(scene_dir);
    write_ppm(scene_dir + "/rgb.ppm", scene.rgb);
    write_depth_rvt(scene_dir + "/depth_raw.rvt", scene.depth_raw);
    write_depth_rvt(scene_dir + "/depth_gt.rvt", scene.depth_gt);
    write_mask_rvt(scene_dir + "/mask_obj.rvt", scene.object_mask);
    write_mask_rvt(scene_dir + "/mask_hand.rvt", scene.hand_mask);
    json kp;
    kp["points"] = json::array();
    for (int i = 0; i < 21; ++i)
        kp["points"].push_back({scene.keypoints.points(i, 0), scene.keypoints.points(i, 1),
                                scene.keypoints.points(i, 2)});
    save_json(scene_dir + "/keypoints.json", kp);
}

SceneRecord read_scene(const std::string& scene_dir, const CameraIntrinsics& k) {
    SceneRecord s;
    s.intrinsics = k;
    s.rgb = read_ppm(scene_dir + "/rgb.ppm");
    s.depth_raw = read_depth_rvt(scene_dir + "/depth_raw.rvt");
    s.depth_gt = read_depth_rvt(scene_dir + "/depth_gt.rvt");
    s.object_mask = read_mask_rvt(scene_dir + "/mask_obj.rvt");
    s.hand_mask = read_mask_rvt(scene_dir + "/mask_hand.rvt");
    const json kp = load_json(scene_dir + "/keypoints.json");
    if (!kp.contains("points") || kp["points"].size() != 21)
        throw DataError("keypoints.json: expected 21 points: " + scene_dir);
    for (int i = 0; i < 21; ++i)
        for (int c = 0; c < 3; ++c) s.keypoints.points(i, c) = kp["points"][i][c].get<double>();
    return s;
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.manifest = load_json(dir + "/manifest.json");
    const json& intr = ds.manifest.at("intrinsics");
    ds.intrinsics.fx = intr.at("fx").get<double>();
    ds.intrinsics.fy = intr.at("fy").get<double>();
    ds.intrinsics.cx = intr.at("cx").get<double>();
    ds.intrinsics.cy = intr.at("cy").get<double>();
    ds.intrinsics.width = intr.at("width").get<int>();
    ds.intrinsics.height = intr.at("height").get<int>();
    ds.config_hash = ds.manifest.value("config_hash", "");
    for (const json& row : ds.manifest.at("scenes")) {
        const std::string id = row.at("id").get<std::string>();
        ds.ids.push_back(id);
        ds.kinds.push_back(row.at("kind").get<std::string>());
        ds.split.push_back(row.at("split").get<int>());
        ds.unknown_category.push_back(row.at("unknown_category").get<bool>());
        ds.scenes.push_back(read_scene(dir + "/scenes/" + id, ds.intrinsics));
    }
    return ds;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, Model& model, const std::string& config_hash) {
    json manifest;
    manifest["format"] = "rvck1";
    manifest["config_hash"] = config_hash;
    manifest["model"] = {{"voxel_resolution", model.config.voxel_resolution},
                         {"hand_feature", to_string(model.config.hand_feature)},
                         {"point_fusion", model.config.point_fusion},
                         {"multiscale", model.config.multiscale}};
    json blocks = json::array();
    std::vector<std::vector<uint8_t>> blobs;
    for (const auto& view : model.param_views()) {
        blocks.push_back({{"name", view.name}, {"dims", {view.rows, view.cols}}});
        TensorData t;
        t.dtype = Dtype::kF64;
        t.dims = {uint32_t(view.rows), uint32_t(view.cols)};
        t.payload.resize(size_t(view.size()) * 8);
        // Column-major in memory, row-major in the container.
        Eigen::Map<const Eigen::MatrixXd> m(view.values, view.rows, view.cols);
        size_t at = 0;
        for (Eigen::Index r = 0; r < view.rows; ++r)
            for (Eigen::Index c = 0; c < view.cols; ++c, at += 8) {
                const double v = m(r, c);
                std::memcpy(t.payload.data() + at, &v, 8);
            }
        blobs.push_back(encode_tensor(t));
    }
    manifest["blocks"] = blocks;

    std::string head = "RVCK1\n" + manifest.dump() + "\n";
    std::vector<uint8_t> bytes(head.begin(), head.end());
    for (const auto& b : blobs) bytes.insert(bytes.end(), b.begin(), b.end());
    write_file(path, bytes.data(), bytes.size());
}

Model load_checkpoint(const std::string& path, std::string* config_hash_out) {
    const std::vector<uint8_t> bytes = read_file(path);
    auto line_end = [&](size_t from) {
        for (size_t i = from; i < bytes.size(); ++i)
            if (bytes[i] == '\n') return i;
        throw DataError("checkpoint: truncated header");
    };
    const size_t l0 = line_end(0);
    if (std::string(bytes.begin(), bytes.begin() + long(l0)) != "RVCK1")
        throw DataError("checkpoint: bad magic");
    const size_t l1 = line_end(l0 + 1);
    const json manifest = json::parse(std::string(bytes.begin() + long(l0) + 1,
                                                  bytes.begin() + long(l1)));
    if (config_hash_out) *config_hash_out = manifest.value("config_hash", "");

    ModelConfig cfg;
    const json& mc = manifest.at("model");
    cfg.voxel_resolution = mc.at("voxel_resolution").get<int>();
    cfg.hand_feature = hand_feature_mode_from_string(mc.at("hand_feature").get<std::string>());
    cfg.point_fusion = mc.at("point_fusion").get<bool>();
    cfg.multiscale = mc.at("multiscale").get<bool>();
    Model model = Model::init(cfg, 0);

    size_t at = l1 + 1;
    auto views = model.param_views();
    const json& blocks = manifest.at("blocks");
    if (blocks.size() != views.size()) throw DataError("checkpoint: block count mismatch");
    for (size_t i = 0; i < views.size(); ++i) {
        // Each blob is a self-describing RVT1 image; decode against the rest
        // of the file and advance by its exact size.
        const TensorData t = [&] {
            // Probe header to learn the blob length.
            if (at + 8 > bytes.size()) throw DataError("checkpoint: truncated blob");
            const size_t rank = bytes[at + 5];
            size_t n = 1;
            for (size_t d = 0; d < rank; ++d) n *= get_u32(bytes.data() + at + 8 + 4 * d);
            const size_t len = 8 + 4 * rank + n * dtype_size(Dtype(bytes[at + 4]));
            if (at + len > bytes.size()) throw DataError("checkpoint: truncated blob");
            TensorData td = decode_tensor(bytes.data() + at, len);
            at += len;
            return td;
        }();
        const auto& view = views[i];
        if (blocks[i].at("name").get<std::string>() != view.name)
            throw DataError("checkpoint: block name mismatch at " + view.name);
        if (t.dtype != Dtype::kF64 || t.dims.size() != 2 || t.dims[0] != uint32_t(view.rows) ||
            t.dims[1] != uint32_t(view.cols))
            throw DataError("checkpoint: block shape mismatch at " + view.name);
        Eigen::Map<Eigen::MatrixXd> m(view.values, view.rows, view.cols);
        size_t off = 0;
        for (Eigen::Index r = 0; r < view.rows; ++r)
            for (Eigen::Index c = 0; c < view.cols; ++c, off += 8) {
                double v;
                std::memcpy(&v, t.payload.data() + off, 8);
                m(r, c) = v;
            }
    }
    return model;
}

// ---------------------------------------------------------------------------

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    json j;
    in >> j;
    return j;
}

void save_json(const std::string& path, const json& j) {
    const std::string text = j.dump(2) + "\n";
    write_file(path, text.data(), text.size());
}

}  // namespace rvdr
