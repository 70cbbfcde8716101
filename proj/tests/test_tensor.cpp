#include <doctest.h>

#include "metagrad/errors.hpp"
#include "metagrad/ops.hpp"
#include "metagrad/rng.hpp"
#include "metagrad/tensor.hpp"

using namespace metagrad;

TEST_CASE("shape numel and factories") {
    Tensor z = Tensor::zeros({2, 3}, DType::f64);
    CHECK(z.numel() == 6);
    CHECK(z.at({1, 2}) == 0.0);

    Tensor s = Tensor::scalar(2.5, DType::f32);
    CHECK(s.numel() == 1);
    CHECK(s.item() == doctest::Approx(2.5));

    Tensor v = Tensor::from_vector({3}, {1, 2, 3}, DType::f64);
    CHECK(v.at({2}) == 3.0);
    CHECK_THROWS_AS(Tensor::from_vector({2}, {1, 2, 3}, DType::f64), ShapeError);
}

TEST_CASE("element count equals product of extents") {
    Tensor t = Tensor::zeros({4, 1, 5}, DType::f32);
    CHECK(t.numel() == 20);
    CHECK(t.data<float>().size() == 20);
    CHECK_THROWS_AS(Tensor::zeros({2, -1}, DType::f32), ShapeError);
}

TEST_CASE("dtype accessor guards") {
    Tensor t = Tensor::zeros({2}, DType::f32);
    CHECK_THROWS_AS(t.data<double>(), ShapeError);
    CHECK(t.data<float>().size() == 2);
}

TEST_CASE("detached shares payload without provenance") {
    Tensor a = Tensor::from_vector({2}, {1, 2}, DType::f64);
    Tensor b = relu(a); // recorded
    CHECK(b.has_node());
    Tensor c = b.detached();
    CHECK_FALSE(c.has_node());
    CHECK(bit_equal(b, c));
}

TEST_CASE("finite detection") {
    Tensor ok = Tensor::from_vector({2}, {1.0, -2.0}, DType::f64);
    CHECK(ok.all_finite());
    Tensor bad = Tensor::from_vector({2}, {1.0, std::numeric_limits<double>::infinity()},
                                     DType::f64);
    CHECK_FALSE(bad.all_finite());
}

TEST_CASE("cast preserves values across precision") {
    Tensor a = Tensor::from_vector({3}, {0.5, -1.25, 2.0}, DType::f64);
    Tensor f = a.cast(DType::f32);
    CHECK(f.dtype() == DType::f32);
    CHECK(f.at_flat(1) == doctest::Approx(-1.25));
}

TEST_CASE("rng determinism and state round trip") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

    Rng c(7);
    c.normal();
    std::string st = c.serialize_state();
    double next = c.uniform();
    Rng d(0);
    d.restore_state(st);
    CHECK(d.uniform() == next);
}
