#include "bvae/dataset.hpp"

#include <type_traits>

#include "bvae/mnist.hpp"

namespace bvae {

MixingOutcome make_model(const MixingSpec& spec) {
    return std::visit(
        [](const auto& s) -> MixingOutcome {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, FormulaMixing>) {
                return {GroundTruthModel::from_formula(s.n, s.k, s.diag, s.offset), std::nullopt};
            } else if constexpr (std::is_same_v<T, ExplicitMixing>) {
                return {GroundTruthModel(s.a), std::nullopt};
            } else {
                const DigitColumns digits = first_digit_per_class(load_idx_images(s.images), load_idx_labels(s.labels));
                return {GroundTruthModel(digits.mixing), digits.indices};
            }
        },
        spec);
}

Dataset build_dataset(const MixingSpec& spec, Index n, std::uint64_t seed) {
    MixingOutcome m = make_model(spec);
    Samples s = sample_data(m.model, n, seed);
    return {std::move(s.x), std::move(s.sources), std::move(m.model), m.mnist_indices};
}

}  // namespace bvae
