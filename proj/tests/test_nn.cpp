#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ssr/nn.hpp"
#include "ssr/rng.hpp"

using namespace ssr::nn;
using ssr::ad::Tape;

namespace {
std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ssr_test_nn";
  std::filesystem::create_directories(dir);
  return dir / name;
}
}  // namespace

TEST_CASE("kaiming_normal sample statistics") {
  std::mt19937_64 rng(1);
  const Tensor w = kaiming_normal({20000}, 25, rng);
  double mean = 0, sq = 0;
  for (double x : w.values()) mean += x;
  mean /= w.size();
  for (double x : w.values()) sq += (x - mean) * (x - mean);
  const double sd = std::sqrt(sq / (w.size() - 1));
  CHECK(std::abs(sd - std::sqrt(2.0 / 25.0)) / std::sqrt(2.0 / 25.0) < 0.05);
  CHECK(std::abs(mean) < 0.01);
}

TEST_CASE("named substreams are deterministic and distinct") {
  auto a = ssr::substream(7, "alpha"), a2 = ssr::substream(7, "alpha");
  auto b = ssr::substream(7, "beta"), c = ssr::substream(8, "alpha");
  const auto x = a();
  CHECK(x == a2());
  CHECK(x != b());
  CHECK(x != c());
}

TEST_CASE("param set basics") {
  ParamSet p;
  p.add("w", Tensor({2, 2}, {1, 2, 3, 4}));
  p.add("b", Tensor({2}, {0, 0}));
  CHECK(p.num_scalars() == 6);
  CHECK_THROWS(p.add("w", Tensor::scalar(1)));
  CHECK_THROWS(p.set("w", Tensor({3}, {1, 2, 3})));
  CHECK_THROWS(p.get("missing"));
  Tape tape;
  auto bound = p.bind(tape);
  CHECK(bound.get("w").tracked());
  CHECK_FALSE(p.get("w").tracked());
  CHECK(p.all_finite());
  p.set("b", Tensor({2}, {NAN, 0}));
  CHECK_FALSE(p.all_finite());
}

TEST_CASE("adam minimizes a quadratic") {
  ParamSet p;
  p.add("x", Tensor({3}, {3.0, -2.0, 0.5}));
  Adam opt({0.05});
  for (int i = 0; i < 2000; ++i) {
    Tape tape;
    auto b = p.bind(tape);
    const Tensor target({3}, {1.0, 1.0, 1.0});
    auto d = b.get("x") - target;
    auto grads = collect_grads(b, tape.backward(ssr::ad::sum(d * d)));
    opt.step(p, grads);
  }
  for (double v : p.get("x").values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(opt.steps() == 2000);
}

TEST_CASE("adam first step moves each coordinate by lr") {
  ParamSet p;
  p.add("x", Tensor({2}, {0.0, 0.0}));
  Adam opt({0.1});
  opt.step(p, {{3.0, -0.002}});
  CHECK(p.get("x")[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.get("x")[1] == doctest::Approx(0.1).epsilon(1e-4));
}

TEST_CASE("gradient clipping caps the global norm") {
  std::vector<std::vector<double>> g{{3.0, 0.0}, {4.0}};
  CHECK(clip_grad_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == 3.0);
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][0] == doctest::Approx(0.8));
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(3);
  Checkpoint ck;
  ck.tensors.add("recon/w", kaiming_normal({4, 3, 2}, 5, rng));
  ck.tensors.add("siam/b", Tensor({2}, {1.0 / 3.0, -1e-300}));
  ck.tensors.add("scalar", Tensor::scalar(42));
  ck.metadata = {{"epoch", 3}, {"mode", "ssr"}};
  const auto path = temp_path("a.ckpt");
  save_checkpoint(path, ck);
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));

  const Checkpoint back = load_checkpoint(path);
  CHECK(back.tensors.names() == ck.tensors.names());
  for (const auto& n : ck.tensors.names()) {
    CHECK(back.tensors.get(n).shape() == ck.tensors.get(n).shape());
    CHECK(back.tensors.get(n).vec() == ck.tensors.get(n).vec());
  }
  CHECK(back.metadata["mode"] == "ssr");

  std::ifstream in(path, std::ios::binary);
  char magic[9] = {};
  in.read(magic, 8);
  CHECK(std::string(magic) == "SSRCKPT1");

  ParamSet target;
  target.add("b", Tensor::zeros({2}));
  load_prefixed(target, back.tensors, "siam/");
  CHECK(target.get("b")[0] == 1.0 / 3.0);
}

TEST_CASE("checkpoint rejects foreign and truncated files") {
  const auto bad = temp_path("bad.ckpt");
  {
    std::ofstream(bad) << "not a checkpoint at all";
  }
  CHECK_THROWS_WITH(load_checkpoint(bad), doctest::Contains("not an SSRCKPT1"));

  Checkpoint ck;
  ck.tensors.add("x", Tensor({100}, std::vector<double>(100, 1.0)));
  const auto path = temp_path("trunc.ckpt");
  save_checkpoint(path, ck);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 16);
  CHECK_THROWS_WITH(load_checkpoint(path), doctest::Contains("truncated"));
  CHECK_THROWS(load_checkpoint(temp_path("missing.ckpt")));
}

TEST_CASE("adam state survives a checkpoint") {
  ParamSet p;
  p.add("x", Tensor({2}, {1.0, 2.0}));
  Adam a({0.01});
  a.step(p, {{0.5, -0.5}});
  ParamSet state;
  a.save_state(state, "adam/");
  Adam b({0.01});
  b.load_state(state, "adam/", p);
  ParamSet p2 = p;
  a.step(p, {{0.1, 0.2}});
  b.step(p2, {{0.1, 0.2}});
  CHECK(p.get("x").vec() == p2.get("x").vec());
}
