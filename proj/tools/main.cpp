#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <iostream>

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) { g_interrupted.store(true); }

} // namespace

int main(int argc, char** argv)
{
    std::signal(SIGINT, on_sigint);
    const std::vector<std::string> args(argv + 1, argv + argc);
    return sur::cli::run_cli(args, std::cout, std::cerr, &g_interrupted);
}
