// Standalone mock endpoint for trying the harness without real models.
//   mock_openai_server [--port N] [--delay-ms N]

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "mock_openai_server.hpp"

namespace {
tit::mock::MockOpenAIServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop_async();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic OpenAI-compatible mock endpoint"};
  int port = 8089, delay_ms = 0, dim = 64;
  std::string host = "127.0.0.1";
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_option("--delay-ms", delay_ms);
  app.add_option("--embedding-dim", dim);
  CLI11_PARSE(app, argc, argv);

  tit::mock::MockOptions opts;
  opts.delay = std::chrono::milliseconds(delay_ms);
  opts.embedding_dim = dim;
  tit::mock::MockOpenAIServer server(opts);
  if (server.bind(host, port) < 0) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on http://" << host << ":" << server.port() << "/v1" << std::endl;
  server.run_blocking();
  return 0;
}
