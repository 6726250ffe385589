#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "mitoseg/mitoseg.hpp"

int main(int argc, char** argv) {
  using namespace mitoseg;
  try {
    const RunConfig cfg = parse_cli(std::vector<std::string>(argv + 1, argv + argc));
    const AlgorithmSettings settings = load_settings(cfg.settings_file);
    run(cfg, settings, &std::clog);
    return static_cast<int>(ExitCode::Success);
  } catch (const HelpRequested& h) {
    std::cout << h.what();
    return static_cast<int>(ExitCode::Success);
  } catch (const Error& e) {
    std::cerr << "mitoseg: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "mitoseg: internal error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Internal);
  }
}
