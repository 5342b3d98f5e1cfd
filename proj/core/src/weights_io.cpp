#include "stan/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace stan {

static const char kMagic[8] = {'S', 'T', 'A', 'N', 'W', '0', '1', '\0'};

void save_weights(const ParamList& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write(kMagic, 8);
    for (const auto& [name, t] : params) {
        const auto len = static_cast<std::uint32_t>(name.size());
        os.write(reinterpret_cast<const char*>(&len), 4);
        os.write(name.data(), len);
        const auto rank = static_cast<std::uint32_t>(t.shape().size());
        os.write(reinterpret_cast<const char*>(&rank), 4);
        for (int d : t.shape()) {
            const auto dim = static_cast<std::uint32_t>(d);
            os.write(reinterpret_cast<const char*>(&dim), 4);
        }
        os.write(reinterpret_cast<const char*>(t.values().data()),
                 static_cast<std::streamsize>(t.values().size() * sizeof(double)));
    }
    if (!os) throw IoError("write failed for " + path);
}

void load_weights(ParamList& params, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("not a weight file (bad magic): " + path);

    std::map<std::string, Tensor*> by_name;
    for (auto& [name, t] : params) by_name[name] = &t;

    while (true) {
        std::uint32_t len = 0;
        is.read(reinterpret_cast<char*>(&len), 4);
        if (is.eof()) break;
        if (!is || len == 0 || len > 4096) throw CorruptError("weight file: bad name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        std::uint32_t rank = 0;
        is.read(reinterpret_cast<char*>(&rank), 4);
        if (!is || rank > 8) throw CorruptError("weight file: bad rank for " + name);
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint32_t dim = 0;
            is.read(reinterpret_cast<char*>(&dim), 4);
            shape[i] = static_cast<int>(dim);
        }
        if (!is) throw CorruptError("weight file truncated in header of " + name);
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("weight file: unknown parameter " + name);
        Tensor& t = *it->second;
        if (t.shape() != shape)
            throw ShapeError("weight file: " + name + " has shape " + shape_str(shape) +
                             ", expected " + shape_str(t.shape()));
        is.read(reinterpret_cast<char*>(t.mutable_values().data()),
                static_cast<std::streamsize>(t.values().size() * sizeof(double)));
        if (!is) throw CorruptError("weight file truncated in payload of " + name);
    }
}

} // namespace stan
