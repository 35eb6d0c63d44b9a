// Runs the same selective-scan instance through all three formulations and
// shows they agree, then times the sequential kernel across lengths.
#include <chrono>
#include <cstdio>

#include "ssdg/ssm.hpp"
#include "ssdg/verify.hpp"

using namespace ssdg;

int main() {
    Rng rng(7);
    const std::size_t L = 48, D = 4, N = 4;
    auto p = verify_detail::random_params(rng, D, N);
    auto x = verify_detail::random_seq(rng, L, D);

    ScanCache seq = s6_forward(x, p);
    Matrix via_alpha = alpha_apply(materialize_alpha(seq.ops), x);
    ScanCache par = scan_parallel(seq.ops, x);

    std::printf("selective scan, L=%zu D=%zu N=%zu\n", L, D, N);
    std::printf("  sequential vs alpha-matrix rel error: %.3e\n",
                rel_error(seq.output, via_alpha));
    std::printf("  sequential vs parallel     rel error: %.3e\n",
                rel_error(seq.output, par.output));

    std::printf("\nsequential kernel timing (D=8, N=8):\n");
    for (std::size_t len : {256, 1024, 4096}) {
        auto pp = verify_detail::random_params(rng, 8, 8);
        auto xx = verify_detail::random_seq(rng, len, 8);
        const auto t0 = std::chrono::steady_clock::now();
        int reps = 0;
        double sink = 0.0;
        do {
            ScanCache c = s6_forward(xx, pp);
            sink += c.output(0, 0);
            ++reps;
        } while (std::chrono::steady_clock::now() - t0 <
                 std::chrono::milliseconds(100));
        const double ns =
            std::chrono::duration<double, std::nano>(
                std::chrono::steady_clock::now() - t0)
                .count() /
            (static_cast<double>(reps) * static_cast<double>(len));
        std::printf("  L=%5zu  %8.1f ns/token  (sink %.3f)\n", len, ns, sink);
    }
    return 0;
}
