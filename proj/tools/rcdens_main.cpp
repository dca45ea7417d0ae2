#include <iostream>

#include "rcdens/cli_config.hpp"
#include "rcdens/errors.hpp"

int main(int argc, char** argv) {
  try {
    const rcdens::RunConfig config = rcdens::parse_config(argc, argv);
    return rcdens::run_command(config);
  } catch (const rcdens::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
