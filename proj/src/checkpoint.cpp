#include "sadv/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace sadv {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes raw little-endian words");
static_assert(sizeof(double) == 8, "checkpoint I/O assumes 64-bit IEEE doubles");

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4))
        throw std::runtime_error(path + ": truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "SADV1 " << m.spec.descriptor << '\n';
    for (const auto& [name, tensor] : m.params) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d = 0; d < tensor.rank(); ++d)
            write_u32(out, static_cast<std::uint32_t>(tensor.dim(d)));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error(path + ": truncated checkpoint");
    if (header.rfind("SADV1 ", 0) != 0)
        throw std::runtime_error(path + ": not a checkpoint (bad magic)");
    const std::string descriptor = header.substr(6);

    // initialize the skeleton from the descriptor, then overwrite each
    // parameter from the stream, validating names and shapes as we go
    Model m = Model::init(descriptor, 0);
    for (auto& [name, tensor] : m.params) {
        const std::uint32_t name_len = read_u32(in, path);
        std::string got(name_len, '\0');
        if (!in.read(got.data(), name_len)) throw std::runtime_error(path + ": truncated checkpoint");
        if (got != name)
            throw std::runtime_error(path + ": parameter '" + got + "' where '" + name +
                                     "' was expected");
        const std::uint32_t rank = read_u32(in, path);
        if (rank != tensor.rank())
            throw std::runtime_error(path + ": parameter '" + name + "' has rank " +
                                     std::to_string(rank) + ", architecture implies " +
                                     std::to_string(tensor.rank()));
        for (std::size_t d = 0; d < tensor.rank(); ++d) {
            const std::uint32_t extent = read_u32(in, path);
            if (extent != tensor.dim(d))
                throw std::runtime_error(path + ": parameter '" + name + "' extent mismatch on axis " +
                                         std::to_string(d));
        }
        if (!in.read(reinterpret_cast<char*>(tensor.data()),
                     static_cast<std::streamsize>(tensor.numel() * sizeof(double))))
            throw std::runtime_error(path + ": truncated checkpoint");
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw std::runtime_error(path + ": trailing bytes after the last parameter");
    return m;
}

}  // namespace sadv
