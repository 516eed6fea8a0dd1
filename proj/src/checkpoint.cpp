#include "windae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "windae/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts are unsupported");

namespace windae {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'W', 'A', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;

json arch_to_json(const Checkpoint& ckpt) {
    json j;
    switch (ckpt.kind) {
    case ModelKind::Vae: {
        const auto& a = std::get<VaeArch>(ckpt.arch);
        j = {{"input_dim", a.input_dim}, {"hidden", a.hidden},  {"latent", a.latent},
             {"alpha", a.alpha},         {"beta", a.beta}};
        break;
    }
    case ModelKind::LstmAe: {
        const auto& a = std::get<LstmArch>(ckpt.arch);
        j = {{"input_dim", a.input_dim}, {"hidden", a.hidden},  {"latent", a.latent},
             {"seq_len", a.seq_len}};
        break;
    }
    case ModelKind::TransformerAe: {
        const auto& a = std::get<TransformerArch>(ckpt.arch);
        j = {{"input_dim", a.input_dim}, {"model_dim", a.model_dim}, {"key_dim", a.key_dim},
             {"ff_dim", a.ff_dim},       {"seq_len", a.seq_len}};
        break;
    }
    }
    return j;
}

void arch_from_json(Checkpoint& ckpt, const json& j) {
    switch (ckpt.kind) {
    case ModelKind::Vae: {
        VaeArch a;
        a.input_dim = j.at("input_dim");
        a.hidden = j.at("hidden");
        a.latent = j.at("latent");
        a.alpha = j.at("alpha");
        a.beta = j.at("beta");
        ckpt.arch = a;
        break;
    }
    case ModelKind::LstmAe: {
        LstmArch a;
        a.input_dim = j.at("input_dim");
        a.hidden = j.at("hidden");
        a.latent = j.at("latent");
        a.seq_len = j.at("seq_len");
        ckpt.arch = a;
        break;
    }
    case ModelKind::TransformerAe: {
        TransformerArch a;
        a.input_dim = j.at("input_dim");
        a.model_dim = j.at("model_dim");
        a.key_dim = j.at("key_dim");
        a.ff_dim = j.at("ff_dim");
        a.seq_len = j.at("seq_len");
        ckpt.arch = a;
        break;
    }
    }
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json header;
    header["kind"] = to_string(ckpt.kind);
    header["arch"] = arch_to_json(ckpt);
    header["columns"] = ckpt.feature_columns;
    header["training"] = {{"epochs_run", ckpt.epochs_run},
                          {"best_val_loss", ckpt.best_val_loss},
                          {"seed", ckpt.seed},
                          {"train_loss_history", ckpt.train_loss_history}};
    json params = json::array();
    for (const auto& [name, mat] : ckpt.params)
        params.push_back({{"name", name}, {"rows", mat.rows()}, {"cols", mat.cols()}});
    header["params"] = params;

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    const std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t hlen = header_str.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, mat] : ckpt.params) {
        for (Eigen::Index r = 0; r < mat.rows(); ++r)
            for (Eigen::Index c = 0; c < mat.cols(); ++c) {
                const double v = mat(r, c);
                out.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
    }
    if (!out) throw DataError("write failure for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("checkpoint '" + path + "' not found");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("'" + path + "' is not a checkpoint file");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header_str(hlen, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw FormatError("truncated checkpoint header in '" + path + "'");

    json header = json::parse(header_str);
    Checkpoint ckpt;
    ckpt.kind = model_kind_from_string(header.at("kind"));
    arch_from_json(ckpt, header.at("arch"));
    ckpt.feature_columns = header.at("columns").get<std::vector<std::string>>();
    ckpt.epochs_run = header.at("training").at("epochs_run");
    ckpt.best_val_loss = header.at("training").at("best_val_loss");
    ckpt.seed = header.at("training").at("seed");
    ckpt.train_loss_history =
        header.at("training").at("train_loss_history").get<std::vector<double>>();

    for (const auto& p : header.at("params")) {
        const std::string name = p.at("name");
        const Eigen::Index rows = p.at("rows");
        const Eigen::Index cols = p.at("cols");
        Eigen::MatrixXd mat(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                double v = 0.0;
                in.read(reinterpret_cast<char*>(&v), sizeof(v));
                mat(r, c) = v;
            }
        ckpt.params[name] = std::move(mat);
    }
    if (!in) throw FormatError("truncated checkpoint payload in '" + path + "'");
    return ckpt;
}

} // namespace windae
