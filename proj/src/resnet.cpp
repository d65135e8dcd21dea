#include "uq/resnet.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "uq/errors.hpp"
#include "uq/rng.hpp"

namespace uq {

void NetworkSpec::validate() const {
    if (num_blocks < 1) {
        throw UsageError("network spec: num_blocks must be >= 1");
    }
    if (num_classes < 2) {
        throw UsageError("network spec: num_classes must be >= 2");
    }
    if (input_dim < 1 || hidden_dim < 1) {
        throw UsageError("network spec: dimensions must be >= 1");
    }
}

GateMask GateMask::all_on(std::size_t blocks) {
    GateMask m;
    m.gates.assign(blocks, 1);
    m.scales.assign(blocks, 1.0);
    return m;
}

ResidualNet ResidualNet::init(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    ResidualNet net;
    net.spec_ = spec;
    std::uint64_t layer = 0;
    auto next_rng = [&] { return derive_stream(seed, StreamKind::init, 0, layer++); };

    RngStream stem_rng = next_rng();
    net.stem_ = Linear::create(spec.input_dim, spec.hidden_dim, stem_rng);
    net.blocks_.reserve(spec.num_blocks);
    for (std::size_t l = 0; l < spec.num_blocks; ++l) {
        Block blk;
        RngStream r1 = next_rng();
        blk.lin1 = Linear::create(spec.hidden_dim, spec.hidden_dim, r1);
        blk.bn = BatchNorm::create(spec.hidden_dim);
        RngStream r2 = next_rng();
        blk.lin2 = Linear::create(spec.hidden_dim, spec.hidden_dim, r2);
        net.blocks_.push_back(std::move(blk));
    }
    RngStream head_rng = next_rng();
    net.head_ = Linear::create(spec.hidden_dim, spec.num_classes, head_rng);
    return net;
}

void ResidualNet::check_input(const Matrix& x) const {
    if (x.cols() != spec_.input_dim) {
        throw ShapeError("forward: input has " + std::to_string(x.cols()) +
                         " features, expected " + std::to_string(spec_.input_dim));
    }
}

void ResidualNet::check_mask(const GateMask& mask) const {
    if (mask.gates.size() != blocks_.size() || mask.scales.size() != blocks_.size()) {
        throw ShapeError("forward: gate mask length " + std::to_string(mask.gates.size()) +
                         " does not match block count " + std::to_string(blocks_.size()));
    }
}

Matrix ResidualNet::penultimate(const Matrix& x, const GateMask& mask,
                                const DropoutPlan* dropout) const {
    check_input(x);
    check_mask(mask);
    Matrix h = stem_.forward(x);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        if (mask.gates[l] == 0) {
            continue;  // identity skip path, bit-identical to a deleted block
        }
        const Block& blk = blocks_[l];
        Matrix a = blk.lin1.forward(h);
        Matrix pre = spec_.use_batchnorm ? blk.bn.forward_eval(a) : std::move(a);
        if (dropout != nullptr && dropout->rate > 0.0) {
            RngStream rng = derive_stream(dropout->stream_key, StreamKind::dropout, 0, l);
            pre = uq::dropout(pre, dropout->rate, rng);
        }
        Matrix f = blk.lin2.forward(relu(pre));
        axpy_in_place(h, mask.scales[l], f);
    }
    return h;
}

Matrix ResidualNet::forward(const Matrix& x, const GateMask& mask,
                            const DropoutPlan* dropout) const {
    return head_.forward(penultimate(x, mask, dropout));
}

Matrix ResidualNet::forward(const Matrix& x, const GateMask& mask, Mode mode,
                            const DropoutPlan* dropout) {
    if (mode == Mode::eval) {
        return static_cast<const ResidualNet&>(*this).forward(x, mask, dropout);
    }
    Trace trace;
    return forward_trace(x, mask, dropout, trace);
}

EmbedResult ResidualNet::embed(const Matrix& x, const GateMask& mask,
                               const DropoutPlan* dropout) const {
    EmbedResult out;
    out.embeddings = penultimate(x, mask, dropout);
    Matrix& e = out.embeddings;
    for (std::size_t i = 0; i < e.rows(); ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < e.cols(); ++j) {
            ss += e(i, j) * e(i, j);
        }
        double norm = std::sqrt(ss);
        if (norm <= 1e-12) {
            out.degenerate = true;
            norm = 1e-12;
        }
        for (std::size_t j = 0; j < e.cols(); ++j) {
            e(i, j) /= norm;
        }
    }
    return out;
}

Matrix ResidualNet::forward_trace(const Matrix& x, const GateMask& mask,
                                  const DropoutPlan* dropout, Trace& trace) {
    check_input(x);
    check_mask(mask);
    trace.x = x;
    Matrix h = stem_.forward(x);
    trace.stem_out = h;
    trace.blocks.assign(blocks_.size(), BlockTrace{});
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        if (mask.gates[l] == 0) {
            continue;
        }
        Block& blk = blocks_[l];
        BlockTrace& bt = trace.blocks[l];
        bt.active = true;
        bt.scale = mask.scales[l];
        bt.x_in = h;
        Matrix a = blk.lin1.forward(h);
        Matrix pre = spec_.use_batchnorm ? blk.bn.forward_train(a, &bt.bn) : std::move(a);
        if (dropout != nullptr && dropout->rate > 0.0) {
            RngStream rng = derive_stream(dropout->stream_key, StreamKind::dropout, 0, l);
            pre = uq::dropout(pre, dropout->rate, rng, &bt.drop_mask);
        }
        bt.relu_in = std::move(pre);
        bt.relu_out = relu(bt.relu_in);
        Matrix f = blk.lin2.forward(bt.relu_out);
        axpy_in_place(h, bt.scale, f);
    }
    trace.head_in = h;
    return head_.forward(h);
}

void ResidualNet::backward_trace(const Trace& trace, const Matrix& dlogits) {
    Matrix dh = head_.backward(trace.head_in, dlogits);
    for (std::size_t li = blocks_.size(); li-- > 0;) {
        const BlockTrace& bt = trace.blocks[li];
        if (!bt.active) {
            continue;
        }
        Block& blk = blocks_[li];
        Matrix df = bt.scale == 1.0 ? dh : scale(dh, bt.scale);
        Matrix dr = blk.lin2.backward(bt.relu_out, df);
        Matrix dd = relu_backward(bt.relu_in, dr);
        if (!bt.drop_mask.empty()) {
            dd = hadamard(dd, bt.drop_mask);
        }
        Matrix da = spec_.use_batchnorm ? blk.bn.backward(bt.bn, dd) : std::move(dd);
        Matrix dx_branch = blk.lin1.backward(bt.x_in, da);
        add_in_place(dh, dx_branch);
    }
    stem_.backward(trace.x, dh);
}

void ResidualNet::zero_grad() {
    stem_.zero_grad();
    head_.zero_grad();
    for (Block& blk : blocks_) {
        blk.lin1.zero_grad();
        blk.bn.zero_grad();
        blk.lin2.zero_grad();
    }
}

std::vector<ParamRef> ResidualNet::parameters() {
    std::vector<ParamRef> out;
    out.push_back({&stem_.w, &stem_.dw, -1, true});
    out.push_back({&stem_.b, &stem_.db, -1, false});
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        Block& blk = blocks_[l];
        const int bi = static_cast<int>(l);
        out.push_back({&blk.lin1.w, &blk.lin1.dw, bi, true});
        out.push_back({&blk.lin1.b, &blk.lin1.db, bi, false});
        if (spec_.use_batchnorm) {
            out.push_back({&blk.bn.gamma, &blk.bn.dgamma, bi, false});
            out.push_back({&blk.bn.beta, &blk.bn.dbeta, bi, false});
        }
        out.push_back({&blk.lin2.w, &blk.lin2.dw, bi, true});
        out.push_back({&blk.lin2.b, &blk.lin2.db, bi, false});
    }
    out.push_back({&head_.w, &head_.dw, -2, true});
    out.push_back({&head_.b, &head_.db, -2, false});
    return out;
}

ResidualNet ResidualNet::without_block(std::size_t index) const {
    if (blocks_.size() < 2) {
        throw UsageError("without_block: cannot drop the only block");
    }
    if (index >= blocks_.size()) {
        throw UsageError("without_block: index out of range");
    }
    ResidualNet out = *this;
    out.blocks_.erase(out.blocks_.begin() + static_cast<std::ptrdiff_t>(index));
    out.spec_.num_blocks -= 1;
    return out;
}

namespace {

nlohmann::json vec_json(const Matrix& m) {
    return nlohmann::json(m.values());
}

Matrix mat_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                     const char* what) {
    if (!j.is_array()) {
        throw ParseError(std::string("checkpoint: ") + what + " is not an array");
    }
    std::vector<double> data;
    data.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) {
            throw ParseError(std::string("checkpoint: ") + what + " has a non-numeric entry");
        }
        data.push_back(v.get<double>());
    }
    if (data.size() != rows * cols) {
        throw ParseError(std::string("checkpoint: ") + what + " has wrong length");
    }
    return Matrix::from_data(rows, cols, std::move(data));
}

}  // namespace

nlohmann::json checkpoint_to_json(const ResidualNet& net) {
    const NetworkSpec& s = net.spec();
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["spec"] = {{"input_dim", s.input_dim},
                   {"hidden_dim", s.hidden_dim},
                   {"num_blocks", s.num_blocks},
                   {"num_classes", s.num_classes},
                   {"use_batchnorm", s.use_batchnorm}};
    nlohmann::json params;
    params["stem"] = {{"w", vec_json(net.stem().w)}, {"b", vec_json(net.stem().b)}};
    params["blocks"] = nlohmann::json::array();
    nlohmann::json bn_state = nlohmann::json::array();
    for (const Block& blk : net.blocks()) {
        nlohmann::json b;
        b["lin1_w"] = vec_json(blk.lin1.w);
        b["lin1_b"] = vec_json(blk.lin1.b);
        if (s.use_batchnorm) {
            b["gamma"] = vec_json(blk.bn.gamma);
            b["beta"] = vec_json(blk.bn.beta);
            bn_state.push_back({{"running_mean", vec_json(blk.bn.running_mean)},
                                {"running_var", vec_json(blk.bn.running_var)}});
        }
        b["lin2_w"] = vec_json(blk.lin2.w);
        b["lin2_b"] = vec_json(blk.lin2.b);
        params["blocks"].push_back(std::move(b));
    }
    params["head"] = {{"w", vec_json(net.head().w)}, {"b", vec_json(net.head().b)}};
    doc["params"] = std::move(params);
    doc["bn_state"] = std::move(bn_state);
    return doc;
}

ResidualNet checkpoint_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("spec") || !doc.contains("params")) {
        throw ParseError("checkpoint: missing spec or params");
    }
    if (doc.value("format_version", 0) != 1) {
        throw ParseError("checkpoint: unsupported format_version");
    }
    const auto& js = doc.at("spec");
    NetworkSpec spec;
    spec.input_dim = js.at("input_dim").get<std::size_t>();
    spec.hidden_dim = js.at("hidden_dim").get<std::size_t>();
    spec.num_blocks = js.at("num_blocks").get<std::size_t>();
    spec.num_classes = js.at("num_classes").get<std::size_t>();
    spec.use_batchnorm = js.at("use_batchnorm").get<bool>();
    spec.validate();

    ResidualNet net = ResidualNet::init(spec, 0);
    const auto& params = doc.at("params");
    const std::size_t h = spec.hidden_dim;
    net.stem().w = mat_from_json(params.at("stem").at("w"), spec.input_dim, h, "stem.w");
    net.stem().b = mat_from_json(params.at("stem").at("b"), 1, h, "stem.b");
    const auto& jblocks = params.at("blocks");
    if (!jblocks.is_array() || jblocks.size() != spec.num_blocks) {
        throw ParseError("checkpoint: block count mismatch");
    }
    const auto& jbn = doc.value("bn_state", nlohmann::json::array());
    if (spec.use_batchnorm && jbn.size() != spec.num_blocks) {
        throw ParseError("checkpoint: bn_state count mismatch");
    }
    for (std::size_t l = 0; l < spec.num_blocks; ++l) {
        Block& blk = net.blocks()[l];
        const auto& jb = jblocks[l];
        blk.lin1.w = mat_from_json(jb.at("lin1_w"), h, h, "lin1_w");
        blk.lin1.b = mat_from_json(jb.at("lin1_b"), 1, h, "lin1_b");
        blk.lin2.w = mat_from_json(jb.at("lin2_w"), h, h, "lin2_w");
        blk.lin2.b = mat_from_json(jb.at("lin2_b"), 1, h, "lin2_b");
        if (spec.use_batchnorm) {
            blk.bn.gamma = mat_from_json(jb.at("gamma"), 1, h, "gamma");
            blk.bn.beta = mat_from_json(jb.at("beta"), 1, h, "beta");
            blk.bn.running_mean = mat_from_json(jbn[l].at("running_mean"), 1, h, "running_mean");
            blk.bn.running_var = mat_from_json(jbn[l].at("running_var"), 1, h, "running_var");
        }
    }
    net.head().w = mat_from_json(params.at("head").at("w"), h, spec.num_classes, "head.w");
    net.head().b = mat_from_json(params.at("head").at("b"), 1, spec.num_classes, "head.b");
    return net;
}

void save_checkpoint(const ResidualNet& net, const nlohmann::json& extra, const std::string& path) {
    nlohmann::json doc = checkpoint_to_json(net);
    for (auto it = extra.begin(); it != extra.end(); ++it) {
        doc[it.key()] = it.value();
    }
    std::ofstream out(path);
    if (!out) {
        throw UsageError("cannot open checkpoint file for writing: " + path);
    }
    out << doc.dump(2) << "\n";
}

ResidualNet load_checkpoint(const std::string& path, nlohmann::json* doc_out) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open checkpoint file: " + path);
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint: invalid json: " + std::string(e.what()));
    }
    ResidualNet net = checkpoint_from_json(doc);
    if (doc_out != nullptr) {
        *doc_out = std::move(doc);
    }
    return net;
}

}  // namespace uq
