#include <iostream>
#include <string>
#include <vector>

#include "lgvae/cli.hpp"

int main(int argc, char** argv) {
    return lgvae::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
