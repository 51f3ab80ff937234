#include <ldb/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return ldb::cli::run(argc, argv, std::cout, std::cerr); }
