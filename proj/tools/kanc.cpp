#include <iostream>
#include <string>
#include <vector>

#include "kanc/cli/app.hpp"

int main(int argc, char** argv) {
  return kanc::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
