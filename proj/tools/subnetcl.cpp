#include <iostream>

#include "subnetcl/cli.hpp"

int main(int argc, char** argv)
{
    return subnetcl::cli::run(argc, argv, std::cout, std::cerr);
}
