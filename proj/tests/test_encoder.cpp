#include <doctest.h>

#include <cmath>

#include "capnet/encoder.hpp"
#include "capnet/errors.hpp"
#include "capnet/gradcheck.hpp"

using namespace capnet;

namespace {

ad::Value conv_once(ad::Tape& tape, const Tensor& img, const Tensor& k, const Tensor& b,
                    int stride, int pad) {
    return ad::conv2d(tape.constant(img), tape.constant(k), tape.constant(b), stride, stride,
                      pad, pad);
}

}  // namespace

TEST_CASE("conv identity kernel reproduces the input") {
    Tensor img({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k = Tensor::full({1, 1, 1, 1}, 1.0);
    Tensor b({1});
    ad::Tape tape;
    ad::Value y = conv_once(tape, img, k, b, 1, 0);
    CHECK(y.val() == img);
}

TEST_CASE("conv all-ones 3x3 sums to 9") {
    Tensor img = Tensor::full({1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b({1});
    ad::Tape tape;
    ad::Value y = conv_once(tape, img, k, b, 1, 0);
    CHECK(y.val().size() == 1);
    CHECK(y.val()[0] == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("conv output shape follows the floor formula") {
    Tensor img({1, 64, 64});
    Tensor k({1, 1, 5, 5});
    Tensor b({1});
    ad::Tape tape;
    ad::Value y = conv_once(tape, img, k, b, 1, 0);
    CHECK(y.val().shape() == std::vector<std::size_t>{1, 60, 60});
    CHECK_THROWS_AS(conv_once(tape, Tensor({1, 2, 2}), k, b, 1, 0), DimensionError);
}

TEST_CASE("maxpool constants, maxima, and first-occurrence tie routing") {
    ad::Tape tape;
    ad::Value c = ad::maxpool2d(tape.constant(Tensor::full({1, 4, 4}, 2.5)), 2, 2, 2, 2);
    for (std::size_t i = 0; i < c.val().size(); ++i) CHECK(c.val()[i] == 2.5);

    ad::Value m = ad::maxpool2d(tape.constant(Tensor({1, 2, 2}, {1, 2, 3, 4})), 2, 2, 1, 1);
    CHECK(m.val()[0] == 4.0);
    CHECK_THROWS_AS(ad::maxpool2d(tape.constant(Tensor({1, 2, 2})), 3, 3, 1, 1), DimensionError);

    // tie: every element equal, gradient must land on the first row-major cell
    ParamStore params;
    params.add("x", Tensor::full({1, 2, 2}, 1.0));
    ad::Tape t2;
    ad::Value x = t2.param(params.get("x"));
    ad::Value y = ad::maxpool2d(x, 2, 2, 1, 1);
    t2.backward(ad::sum(y));
    CHECK(params.get("x").grad[0] == 1.0);
    CHECK(params.get("x").grad[1] == 0.0);
    CHECK(params.get("x").grad[2] == 0.0);
    CHECK(params.get("x").grad[3] == 0.0);
}

namespace {

struct SmallEncoder {
    EncoderConfig cfg;
    ParamStore params;
    SmallEncoder() {
        cfg.conv1_channels = 4;
        cfg.feat_dim = 6;
        cfg.grid_side = 2;
        cfg.head_channels = 5;
        cfg.head_fc_dim = 7;
        RngStream rng(31);
        init_trunk_params(params, "enc.", cfg, rng);
    }
};

}  // namespace

TEST_CASE("encode_image geometry, mean invariant, determinism, zero case") {
    SmallEncoder e;
    RngStream rng(32);
    Tensor img({3, 16, 16});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();

    FeatureGrid grid = encode_image(img, e.params, e.cfg, "enc.");
    CHECK(grid.regions.shape() == std::vector<std::size_t>{4, 6});
    CHECK(grid.global.shape() == std::vector<std::size_t>{6});
    for (std::size_t j = 0; j < 6; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 4; ++i) mean += grid.regions.at(i, j);
        mean /= 4.0;
        CHECK(std::abs(grid.global[j] - mean) <= 1e-12);
    }

    FeatureGrid again = encode_image(img, e.params, e.cfg, "enc.");
    CHECK(grid.regions == again.regions);
    CHECK(grid.global == again.global);

    // zero image with zero biases stays zero through conv/relu/pool
    Tensor zero_img({3, 16, 16});
    FeatureGrid zg = encode_image(zero_img, e.params, e.cfg, "enc.");
    for (std::size_t i = 0; i < zg.regions.size(); ++i) CHECK(zg.regions[i] == 0.0);

    CHECK_THROWS_AS(encode_image(Tensor({1, 16, 16}), e.params, e.cfg, "enc."), DimensionError);
}

TEST_CASE("default grid side 7 yields 49 regions") {
    EncoderConfig cfg;
    cfg.conv1_channels = 4;
    cfg.feat_dim = 8;
    cfg.grid_side = 7;
    ParamStore params;
    RngStream rng(33);
    init_trunk_params(params, "enc.", cfg, rng);
    Tensor img({3, 32, 32});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    FeatureGrid grid = encode_image(img, params, cfg, "enc.");
    CHECK(grid.regions.shape() == std::vector<std::size_t>{49, 8});
    CHECK(grid.grid_side == 7);
}

TEST_CASE("attribute probabilities: zero weights give exactly 0.5") {
    EncoderConfig cfg;
    cfg.conv1_channels = 4;
    cfg.feat_dim = 6;
    cfg.grid_side = 2;
    cfg.head_channels = 5;
    cfg.head_fc_dim = 7;
    ParamStore params;
    RngStream rng(34);
    init_extractor_params(params, cfg, 9, rng);

    Tensor img({3, 16, 16});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    AttributeProbs probs = attribute_probs(img, params, cfg);
    CHECK(probs.probs.size() == 9);
    for (std::size_t i = 0; i < probs.probs.size(); ++i) {
        CHECK(probs.probs[i] == 0.5);  // zero-initialised output layer
    }

    // after nudging the output layer, probabilities stay strictly inside (0,1)
    Parameter& v = params.get("ext.out.V");
    for (std::size_t i = 0; i < v.value.size(); ++i) v.value[i] = rng.normal(0.0, 1.0);
    AttributeProbs p2 = attribute_probs(img, params, cfg);
    for (std::size_t i = 0; i < p2.probs.size(); ++i) {
        CHECK(p2.probs[i] > 0.0);
        CHECK(p2.probs[i] < 1.0);
    }

    ParamStore no_ext;
    init_trunk_params(no_ext, "ext.", cfg, rng);
    CHECK_THROWS_AS(attribute_probs(img, no_ext, cfg), ConfigError);
}

TEST_CASE("attribute loss spot values from the weighted cross entropy") {
    AttributeProbs probs{Tensor::from_vector({0.5})};
    CHECK(attribute_loss(probs, Tensor::from_vector({1.0}), 1.0) ==
          doctest::Approx(100.0 * std::log(2.0)).epsilon(1e-9));
    CHECK(attribute_loss(probs, Tensor::from_vector({0.0}), 1.0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));

    AttributeProbs good{Tensor::from_vector({1.0 - 1e-13, 1e-13})};
    CHECK(attribute_loss(good, Tensor({2}, {1.0, 0.0}), 1.0) ==
          doctest::Approx(0.0).epsilon(1e-9));

    CHECK_THROWS_AS(attribute_loss(probs, Tensor::from_vector({0.5}), 1.0), ValidationError);
    CHECK_THROWS_AS(attribute_loss(probs, Tensor::from_vector({1.0, 0.0}), 1.0),
                    DimensionError);
}

TEST_CASE("attribute loss is minimised at q = label per coordinate") {
    // 1-D scan over q for both label values
    for (double label : {0.0, 1.0}) {
        double best_q = -1.0, best = 1e300;
        for (double q = 0.01; q < 1.0; q += 0.01) {
            AttributeProbs probs{Tensor::from_vector({q})};
            const double l = attribute_loss(probs, Tensor::from_vector({label}), 1.0);
            if (l < best) {
                best = l;
                best_q = q;
            }
        }
        CHECK(std::abs(best_q - label) <= 0.011);
    }
}

TEST_CASE("attribute loss gradient passes grad_check") {
    EncoderConfig cfg;
    cfg.conv1_channels = 3;
    cfg.feat_dim = 4;
    cfg.grid_side = 2;
    cfg.head_channels = 4;
    cfg.head_fc_dim = 5;
    ParamStore params;
    RngStream rng(35);
    init_extractor_params(params, cfg, 6, rng);
    // give the zero-initialised output layer some signal to differentiate
    for (auto& [name, p] : params) {
        if (name.rfind("ext.out", 0) == 0) {
            for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.normal(0.0, 0.4);
        }
    }
    Tensor img({3, 12, 12});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    Tensor labels({6});
    labels[1] = labels[4] = 1.0;

    LossFn loss = [&](ParamStore& ps, bool with_grad) {
        ad::Tape tape;
        ad::Value probs = ad::sigmoid(attribute_logits_nodes(tape, tape.constant(img), ps, cfg,
                                                             with_grad));
        ad::Value l = attribute_loss_nodes(tape, probs, labels, 1.0);
        if (with_grad) tape.backward(l);
        return l.val()[0];
    };
    auto report = grad_check(loss, params, 1e-5, 1e-4, 77);
    CHECK(report.ok());
}

TEST_CASE("top-k attributes ordering and tie rules") {
    AttributeProbs probs{Tensor::from_vector({0.1, 0.9, 0.5})};
    CHECK(top_k_attributes(probs, 2) == std::vector<std::size_t>{1, 2});

    AttributeProbs onehot{Tensor::from_vector({0.2, 0.2, 0.95, 0.2})};
    CHECK(top_k_attributes(onehot, 1)[0] == 2);

    AttributeProbs equal{Tensor::full({6}, 0.3)};
    CHECK(top_k_attributes(equal, 3) == std::vector<std::size_t>{0, 1, 2});

    CHECK_THROWS_AS(top_k_attributes(probs, 0), ValidationError);
    CHECK_THROWS_AS(top_k_attributes(probs, 4), ValidationError);
}
