#include "driver.hpp"

int main(int argc, char** argv) { return cloaksim::cli::main_entry(argc, argv); }
