#include <cstdio>
#include "metagrad/autodiff.hpp"
#include "metagrad/ops.hpp"
int main() {
    using namespace metagrad;
    Tensor x = Tensor::scalar(3.0, DType::f64);
    Tensor loss = mul(mul(x, x), x);
    auto g = autodiff::grad(loss, {x}, true);
    auto h = autodiff::grad(g[0], {x}, false);
    std::printf("f=x^3 at 3: f'=%g f''=%g\n", g[0].item(), h[0].item());
    return g[0].item() == 27.0 && h[0].item() == 18.0 ? 0 : 1;
}
