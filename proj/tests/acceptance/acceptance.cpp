// Acceptance checks: one PASS/FAIL line per criterion.
//
// usage: dmdd_acceptance [--workdir DIR] [criterion numbers...]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "criteria.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  acceptance::Options opt;
  std::vector<int> wanted;
  for (int a = 1; a < argc; ++a) {
    if (std::strcmp(argv[a], "--workdir") == 0 && a + 1 < argc) {
      opt.workdir = argv[++a];
    } else {
      wanted.push_back(std::atoi(argv[a]));
    }
  }
  fs::create_directories(opt.workdir);
  const auto& all = acceptance::registry();
  if (wanted.empty())
    for (const auto& [n, c] : all) wanted.push_back(n);

  int failed = 0;
  for (int n : wanted) {
    const auto it = all.find(n);
    if (it == all.end()) {
      std::cout << "FAIL criterion " << n << ": no such criterion\n";
      ++failed;
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    acceptance::Outcome out;
    try {
      out = it->second.run(opt);
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= it->second.time_limit_s;
    const bool pass = out.pass && in_time;
    char tbuf[64];
    std::snprintf(tbuf, sizeof tbuf, " [%.1f s, limit %.0f s]", secs, it->second.time_limit_s);
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << n << " (" << it->second.title
              << "): " << out.detail << (in_time ? "" : " TIME LIMIT EXCEEDED") << tbuf << std::endl;
    if (!pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
