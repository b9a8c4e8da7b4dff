// Regenerates fixtures/iiot_sample.csv. The bundled file is committed; this
// exists so the fixture can be rebuilt or resized.

#include <fstream>
#include <iostream>
#include <string>

#include "ftl/synth.hpp"

int main(int argc, char** argv) {
    std::string path = "fixtures/iiot_sample.csv";
    std::size_t rows = 2000;
    if (argc > 1) path = argv[1];
    if (argc > 2) rows = std::stoul(argv[2]);

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        std::cerr << "cannot write " << path << '\n';
        return 1;
    }
    ftl::write_iiot_fixture(out, rows);
    std::cout << "wrote " << path << " (" << rows << " rows)\n";
    return 0;
}
