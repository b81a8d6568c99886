#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "timecast/checkpoint.hpp"
#include "timecast/errors.hpp"
#include "timecast/unet.hpp"
#include "timecast/diffusion.hpp"

using namespace timecast;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "timecast_ckpt_test";
  fs::create_directories(dir);
  return dir;
}
}  // namespace

TEST_CASE("checkpoint roundtrip restores every parameter bit-exactly") {
  diffusion::ForecastModel model(diffusion::ModelConfig::tiny16(), 42);
  nn::ParamRefs params = model.parameters();
  const fs::path path = temp_dir() / "model.tck";
  nn::save_checkpoint(path, params);

  diffusion::ForecastModel other(diffusion::ModelConfig::tiny16(), 43);
  nn::ParamRefs other_params = other.parameters();
  bool some_differ = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::int64_t j = 0; j < params[i]->tensor.numel(); ++j) {
      if (params[i]->tensor.at(j) != other_params[i]->tensor.at(j)) {
        some_differ = true;
      }
    }
  }
  CHECK(some_differ);  // different init seeds actually differ

  nn::bind_parameters(nn::load_checkpoint(path), other_params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(params[i]->name == other_params[i]->name);
    for (std::int64_t j = 0; j < params[i]->tensor.numel(); ++j) {
      CHECK(params[i]->tensor.at(j) == other_params[i]->tensor.at(j));
    }
  }
}

TEST_CASE("checkpoint carries optimizer state under the STATE sentinel") {
  diffusion::ForecastModel model(diffusion::ModelConfig::tiny16(), 7);
  nn::ParamRefs params = model.parameters();
  nn::AdamW opt(nn::AdamWConfig{}, params);
  // one fake step so moments are nonzero
  for (nn::Parameter* p : params) {
    for (float& g : p->tensor.grad()) g = 0.01f;
  }
  opt.step(params);

  const fs::path path = temp_dir() / "model_state.tck";
  nn::save_checkpoint(path, params, &opt);

  auto loaded = nn::load_checkpoint(path);
  CHECK(loaded.has_state);

  nn::AdamW opt2(nn::AdamWConfig{}, params);
  nn::bind_optimizer(loaded, opt2, params);
  CHECK(opt2.step_count() == 1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::int64_t j = 0; j < opt.first_moments()[i].numel(); ++j) {
      CHECK(opt.first_moments()[i].at(j) == opt2.first_moments()[i].at(j));
      CHECK(opt.second_moments()[i].at(j) == opt2.second_moments()[i].at(j));
    }
  }
}

TEST_CASE("checkpoint format starts with the TCK1 magic") {
  diffusion::ForecastModel model(diffusion::ModelConfig::tiny16(), 1);
  nn::ParamRefs params = model.parameters();
  const fs::path path = temp_dir() / "magic.tck";
  nn::save_checkpoint(path, params);
  std::ifstream is(path, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  CHECK(std::string(magic, 4) == "TCK1");
}

TEST_CASE("bad magic is rejected") {
  const fs::path path = temp_dir() / "junk.tck";
  std::ofstream(path, std::ios::binary) << "NOPE garbage";
  CHECK_THROWS_AS(nn::load_checkpoint(path), Error);
}

TEST_CASE("parameter count mismatch is rejected") {
  diffusion::ForecastModel model(diffusion::ModelConfig::tiny16(), 1);
  nn::ParamRefs params = model.parameters();
  const fs::path path = temp_dir() / "count.tck";
  nn::save_checkpoint(path, params);

  diffusion::ModelConfig small = diffusion::ModelConfig::tiny16();
  small.use_cross_attention = false;
  diffusion::ForecastModel other(small, 1);
  nn::ParamRefs other_params = other.parameters();
  CHECK_THROWS_AS(nn::bind_parameters(nn::load_checkpoint(path), other_params),
                  Error);
}

TEST_CASE("file content hash is stable and content-sensitive") {
  const fs::path a = temp_dir() / "a.bin";
  const fs::path b = temp_dir() / "b.bin";
  std::ofstream(a, std::ios::binary) << "hello world";
  std::ofstream(b, std::ios::binary) << "hello worle";
  CHECK(nn::file_content_hash(a) == nn::file_content_hash(a));
  CHECK(nn::file_content_hash(a) != nn::file_content_hash(b));
}
