#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tit/harness/cli.hpp"

int main(int argc, char** argv) {
  // stdout carries machine-readable output; logs go to stderr
  spdlog::set_default_logger(spdlog::stderr_color_mt("titscore"));
  return tit::harness::run_cli(argc, argv);
}
