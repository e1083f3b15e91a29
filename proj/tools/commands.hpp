#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace strucdec::cli {

struct CommandOptions {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string split = "test";
  std::string mode = "hybrid";
  std::size_t count = 0;  // 0: command default
  std::size_t steps = 8;
  std::vector<std::size_t> segments;
};

int cmd_train(const CommandOptions& o);
int cmd_eval(const CommandOptions& o);
int cmd_sample(const CommandOptions& o);
int cmd_traverse(const CommandOptions& o);
int cmd_partial(const CommandOptions& o);
int cmd_extrapolate(const CommandOptions& o);

}  // namespace strucdec::cli
