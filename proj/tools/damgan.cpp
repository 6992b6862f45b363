#include "damgan/commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return damgan::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
