#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "uq/layers.hpp"
#include "uq/matrix.hpp"

namespace uq {

struct NetworkSpec {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t num_blocks = 0;   // L
    std::size_t num_classes = 0;  // C
    bool use_batchnorm = true;

    void validate() const;  // L >= 1, C >= 2, dims >= 1
    bool operator==(const NetworkSpec&) const = default;
};

// per-block binary gates with their residual-branch multipliers
struct GateMask {
    std::vector<std::uint8_t> gates;
    std::vector<double> scales;

    static GateMask all_on(std::size_t blocks);
    std::size_t size() const { return gates.size(); }
};

enum class Mode { train, eval };

// residual branch: linear -> batchnorm -> relu -> linear
struct Block {
    Linear lin1;
    BatchNorm bn;
    Linear lin2;
};

// inverted dropout inside every active block's branch, applied to the post-BN
// activation; the per-block stream is derived from stream_key and the block index
struct DropoutPlan {
    double rate = 0.0;
    std::uint64_t stream_key = 0;
};

struct EmbedResult {
    Matrix embeddings;        // unit-norm rows
    bool degenerate = false;  // some row had norm <= 1e-12 before normalization
};

// view over one parameter tensor; block is the owning block index, -1 for the
// stem and -2 for the head. is_weight distinguishes decayed matrices from
// biases and batch-norm affine parameters.
struct ParamRef {
    Matrix* value;
    Matrix* grad;
    int block;
    bool is_weight;
};

class ResidualNet {
public:
    ResidualNet() = default;
    static ResidualNet init(const NetworkSpec& spec, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    Linear& stem() { return stem_; }
    Linear& head() { return head_; }
    std::vector<Block>& blocks() { return blocks_; }
    const Linear& stem() const { return stem_; }
    const Linear& head() const { return head_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    // gated forward pass. train mode standardizes with batch statistics and
    // updates BN running stats; eval mode is read-only on the net.
    Matrix forward(const Matrix& x, const GateMask& mask, Mode mode,
                   const DropoutPlan* dropout = nullptr);
    Matrix forward(const Matrix& x, const GateMask& mask,
                   const DropoutPlan* dropout = nullptr) const;  // eval

    // post-blocks activation before the classification head (eval mode)
    Matrix penultimate(const Matrix& x, const GateMask& mask,
                       const DropoutPlan* dropout = nullptr) const;
    // penultimate with rows normalized to unit length
    EmbedResult embed(const Matrix& x, const GateMask& mask,
                      const DropoutPlan* dropout = nullptr) const;

    // training-path forward that records what backward needs
    struct BlockTrace {
        bool active = false;
        double scale = 1.0;
        Matrix x_in;
        BatchNorm::Cache bn;
        Matrix drop_mask;  // empty when no dropout was applied
        Matrix relu_in;
        Matrix relu_out;
    };
    struct Trace {
        Matrix x;
        Matrix stem_out;
        std::vector<BlockTrace> blocks;
        Matrix head_in;
    };
    Matrix forward_trace(const Matrix& x, const GateMask& mask, const DropoutPlan* dropout,
                         Trace& trace);
    // propagates dlogits back through the recorded pass, accumulating grads
    void backward_trace(const Trace& trace, const Matrix& dlogits);

    void zero_grad();
    std::vector<ParamRef> parameters();

    // surgically removes one block (for gate-off equivalence checks)
    ResidualNet without_block(std::size_t index) const;

private:
    NetworkSpec spec_;
    Linear stem_;
    std::vector<Block> blocks_;
    Linear head_;

    void check_input(const Matrix& x) const;
    void check_mask(const GateMask& mask) const;
};

// checkpoint document: {format_version, spec, params, bn_state} plus whatever
// the caller merges in. float round-trip is bit-exact.
nlohmann::json checkpoint_to_json(const ResidualNet& net);
ResidualNet checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const ResidualNet& net, const nlohmann::json& extra, const std::string& path);
ResidualNet load_checkpoint(const std::string& path, nlohmann::json* doc_out = nullptr);

}  // namespace uq
