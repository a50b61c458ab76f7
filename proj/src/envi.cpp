/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "gypsum/envi.hpp"

#include "gypsum/error.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace gypsum {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string normalize_key(std::string_view k) {
    std::string out;
    bool space = false;
    for (char ch : trim(k)) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> split_list(const std::string& value) {
    std::string v = trim(value);
    if (!v.empty() && v.front() == '{') v.erase(v.begin());
    if (!v.empty() && v.back() == '}') v.pop_back();
    std::vector<std::string> items;
    std::string cur;
    for (char ch : v) {
        if (ch == ',') {
            items.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!trim(cur).empty() || !items.empty()) items.push_back(trim(cur));
    return items;
}

template <class T>
T parse_number(const std::string& text, const std::string& field) {
    const std::string t = trim(text);
    T value{};
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw_io("ENVI header: field '" + field + "' has invalid value '" + t + "'");
    return value;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <class T>
T load_sample(const unsigned char* p, bool swap) {
    unsigned char tmp[sizeof(T)];
    std::memcpy(tmp, p, sizeof(T));
    if (swap) std::reverse(tmp, tmp + sizeof(T));
    T v;
    std::memcpy(&v, tmp, sizeof(T));
    return v;
}

double decode(int data_type, const unsigned char* p, bool swap) {
    switch (data_type) {
        case 1: return static_cast<double>(*p);
        case 2: return static_cast<double>(load_sample<std::int16_t>(p, swap));
        case 3: return static_cast<double>(load_sample<std::int32_t>(p, swap));
        case 4: return static_cast<double>(load_sample<float>(p, swap));
        case 5: return load_sample<double>(p, swap);
        case 12: return static_cast<double>(load_sample<std::uint16_t>(p, swap));
        case 13: return static_cast<double>(load_sample<std::uint32_t>(p, swap));
        default: throw_io("ENVI: unsupported data type " + std::to_string(data_type));
    }
}

const char* interleave_name(Interleave il) {
    switch (il) {
        case Interleave::Bsq: return "bsq";
        case Interleave::Bil: return "bil";
        case Interleave::Bip: return "bip";
    }
    return "bsq";
}

std::size_t file_index(const EnviHeader& h, std::size_t line, std::size_t sample, std::size_t band) {
    switch (h.interleave) {
        case Interleave::Bsq: return (band * h.lines + line) * h.samples + sample;
        case Interleave::Bil: return (line * h.bands + band) * h.samples + sample;
        case Interleave::Bip: return (line * h.samples + sample) * h.bands + band;
    }
    return 0;
}

template <class T>
void append_sample(std::string& out, T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char tmp[sizeof(T)];
        std::memcpy(tmp, &v, sizeof(T));
        std::reverse(tmp, tmp + sizeof(T));
        out.append(reinterpret_cast<const char*>(tmp), sizeof(T));
    } else {
        out.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw_io("failed writing '" + path.string() + "'");
}

std::vector<double> read_single_band(const fs::path& header_path, const std::optional<fs::path>& data_path,
                                     EnviHeader& header) {
    header = read_envi_header(header_path);
    if (header.bands != 1)
        throw_io("'" + header_path.string() + "' has " + std::to_string(header.bands) +
                 " bands, expected a single-band raster");
    return read_envi_samples(header, data_path ? *data_path : find_envi_payload(header_path));
}

}  // namespace

std::size_t envi_element_size(int data_type) {
    switch (data_type) {
        case 1: return 1;
        case 2:
        case 12: return 2;
        case 3:
        case 4:
        case 13: return 4;
        case 5: return 8;
        default: throw_io("ENVI: unsupported data type " + std::to_string(data_type));
    }
}

EnviHeader parse_envi_header(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    bool signature = false;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        signature = lower(t).rfind("envi", 0) == 0;
        break;
    }
    if (!signature) throw_io("ENVI header: missing 'ENVI' signature line");

    std::map<std::string, std::string> fields;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = normalize_key(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (!value.empty() && value.front() == '{') {
            while (value.find('}') == std::string::npos && std::getline(in, line)) value += " " + trim(line);
            if (value.find('}') == std::string::npos)
                throw_io("ENVI header: unterminated '{' list for field '" + key + "'");
        }
        fields[key] = value;
    }

    auto require = [&](const char* key) -> const std::string& {
        auto it = fields.find(key);
        if (it == fields.end()) throw_io(std::string("ENVI header: missing required field '") + key + "'");
        return it->second;
    };

    EnviHeader h;
    h.samples = parse_number<std::size_t>(require("samples"), "samples");
    h.lines = parse_number<std::size_t>(require("lines"), "lines");
    h.bands = parse_number<std::size_t>(require("bands"), "bands");
    h.data_type = parse_number<int>(require("data type"), "data type");
    envi_element_size(h.data_type);
    if (h.samples == 0 || h.lines == 0 || h.bands == 0)
        throw_io("ENVI header: samples, lines and bands must be positive");

    if (auto it = fields.find("interleave"); it != fields.end()) {
        const std::string il = lower(trim(it->second));
        if (il == "bsq") h.interleave = Interleave::Bsq;
        else if (il == "bil") h.interleave = Interleave::Bil;
        else if (il == "bip") h.interleave = Interleave::Bip;
        else throw_io("ENVI header: field 'interleave' has unsupported value '" + il + "'");
    }
    if (auto it = fields.find("byte order"); it != fields.end()) {
        const int bo = parse_number<int>(it->second, "byte order");
        if (bo != 0 && bo != 1) throw_io("ENVI header: field 'byte order' must be 0 or 1");
        h.byte_order = bo == 0 ? ByteOrder::Little : ByteOrder::Big;
    }
    if (auto it = fields.find("header offset"); it != fields.end())
        h.header_offset = parse_number<std::size_t>(it->second, "header offset");
    if (auto it = fields.find("file type"); it != fields.end()) h.file_type = trim(it->second);
    if (auto it = fields.find("data ignore value"); it != fields.end())
        h.data_ignore_value = parse_number<double>(it->second, "data ignore value");

    if (auto it = fields.find("wavelength"); it != fields.end()) {
        std::vector<double> wl;
        for (const auto& item : split_list(it->second)) wl.push_back(parse_number<double>(item, "wavelength"));
        if (wl.size() != h.bands)
            throw_io("ENVI header: field 'wavelength' lists " + std::to_string(wl.size()) + " values for " +
                     std::to_string(h.bands) + " bands");
        std::string units;
        if (auto u = fields.find("wavelength units"); u != fields.end()) units = lower(trim(u->second));
        const bool micrometres = units == "micrometers" || units == "micrometres" || units == "microns" ||
                                 units == "um" ||
                                 (units.empty() && !wl.empty() && *std::max_element(wl.begin(), wl.end()) < 100.0);
        if (micrometres)
            for (double& v : wl) v *= 1000.0;
        h.wavelength = std::move(wl);
    }

    if (auto it = fields.find("class lookup"); it != fields.end()) {
        const auto items = split_list(it->second);
        if (items.size() % 3 != 0) throw_io("ENVI header: field 'class lookup' is not a list of RGB triplets");
        for (std::size_t i = 0; i < items.size(); i += 3) {
            Rgb c;
            c.r = static_cast<std::uint8_t>(parse_number<int>(items[i], "class lookup"));
            c.g = static_cast<std::uint8_t>(parse_number<int>(items[i + 1], "class lookup"));
            c.b = static_cast<std::uint8_t>(parse_number<int>(items[i + 2], "class lookup"));
            h.class_lookup.push_back(c);
        }
    }
    if (auto it = fields.find("class names"); it != fields.end()) h.class_names = split_list(it->second);
    return h;
}

EnviHeader read_envi_header(const fs::path& header_path) {
    std::ifstream in(header_path);
    if (!in) throw_io("cannot open ENVI header '" + header_path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_envi_header(ss.str());
}

std::string format_envi_header(const EnviHeader& h) {
    std::ostringstream out;
    out << "ENVI\n";
    out << "samples = " << h.samples << "\n";
    out << "lines = " << h.lines << "\n";
    out << "bands = " << h.bands << "\n";
    out << "header offset = " << h.header_offset << "\n";
    out << "file type = " << h.file_type << "\n";
    out << "data type = " << h.data_type << "\n";
    out << "interleave = " << interleave_name(h.interleave) << "\n";
    out << "byte order = " << static_cast<int>(h.byte_order) << "\n";
    if (h.data_ignore_value) out << "data ignore value = " << format_double(*h.data_ignore_value) << "\n";
    if (!h.class_lookup.empty()) {
        out << "classes = " << h.class_lookup.size() << "\n";
        out << "class lookup = {";
        for (std::size_t i = 0; i < h.class_lookup.size(); ++i) {
            const auto& c = h.class_lookup[i];
            out << (i ? ", " : "") << int(c.r) << ", " << int(c.g) << ", " << int(c.b);
        }
        out << "}\n";
    }
    if (!h.class_names.empty()) {
        out << "class names = {";
        for (std::size_t i = 0; i < h.class_names.size(); ++i) out << (i ? ", " : "") << h.class_names[i];
        out << "}\n";
    }
    if (h.wavelength) {
        out << "wavelength units = Nanometers\n";
        out << "wavelength = {";
        for (std::size_t i = 0; i < h.wavelength->size(); ++i)
            out << (i ? ", " : "") << format_double((*h.wavelength)[i]);
        out << "}\n";
    }
    return out.str();
}

fs::path find_envi_payload(const fs::path& header_path) {
    for (const char* ext : {".img", ".dat", ".raw", ".bin", ""}) {
        fs::path candidate = header_path;
        candidate.replace_extension(ext);
        if (candidate != header_path && fs::exists(candidate)) return candidate;
    }
    throw_io("no data file found next to '" + header_path.string() + "'");
}

std::vector<double> read_envi_samples(const EnviHeader& h, const fs::path& data_path) {
    const std::size_t esize = envi_element_size(h.data_type);
    const std::size_t count = h.samples * h.lines * h.bands;
    std::error_code ec;
    const auto file_size = fs::file_size(data_path, ec);
    if (ec) throw_io("cannot stat ENVI data file '" + data_path.string() + "'");
    const std::size_t needed = count * esize + h.header_offset;
    if (needed > file_size)
        throw_io("ENVI size mismatch: header needs " + std::to_string(needed) + " bytes (samples*lines*bands*" +
                 std::to_string(esize) + " + offset) but '" + data_path.string() + "' has " +
                 std::to_string(file_size));

    std::ifstream in(data_path, std::ios::binary);
    if (!in) throw_io("cannot open ENVI data file '" + data_path.string() + "'");
    in.seekg(static_cast<std::streamoff>(h.header_offset));
    std::vector<unsigned char> raw(count * esize);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw_io("short read on '" + data_path.string() + "'");

    const bool file_little = h.byte_order == ByteOrder::Little;
    const bool swap = esize > 1 && file_little != (std::endian::native == std::endian::little);
    std::vector<double> bip(count);
    for (std::size_t l = 0; l < h.lines; ++l)
        for (std::size_t s = 0; s < h.samples; ++s)
            for (std::size_t b = 0; b < h.bands; ++b)
                bip[(l * h.samples + s) * h.bands + b] =
                    decode(h.data_type, raw.data() + file_index(h, l, s, b) * esize, swap);
    return bip;
}

std::vector<double> read_wavelength_sidecar(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open wavelength file '" + path.string() + "'");
    std::vector<double> wl;
    std::string token;
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream tokens(text);
    while (tokens >> token) wl.push_back(parse_number<double>(token, "wavelength"));
    if (wl.empty()) throw_io("wavelength file '" + path.string() + "' is empty");
    return wl;
}

HsiCube read_envi(const fs::path& header_path, const std::optional<fs::path>& data_path,
                  const std::optional<fs::path>& wavelength_sidecar) {
    const EnviHeader h = read_envi_header(header_path);
    std::vector<double> wl;
    if (wavelength_sidecar) {
        wl = read_wavelength_sidecar(*wavelength_sidecar);
        if (wl.size() != h.bands)
            throw_io("wavelength file lists " + std::to_string(wl.size()) + " values for " +
                     std::to_string(h.bands) + " bands");
    } else if (h.wavelength) {
        wl = *h.wavelength;
    } else {
        throw_io("ENVI header '" + header_path.string() +
                 "': missing field 'wavelength' and no wavelength file was supplied");
    }
    auto samples = read_envi_samples(h, data_path ? *data_path : find_envi_payload(header_path));
    WavelengthGrid grid;
    try {
        grid = WavelengthGrid(std::move(wl));
    } catch (const Error& e) {
        throw_io(std::string("ENVI field 'wavelength': ") + e.what());
    }
    return HsiCube(h.lines, h.samples, std::move(grid), std::move(samples));
}

void write_envi(const HsiCube& cube, const fs::path& header_path, const fs::path& data_path,
                Interleave interleave, int data_type) {
    if (data_type != 4 && data_type != 5) throw_invalid("write_envi: only float32 (4) and float64 (5) are written");
    EnviHeader h;
    h.samples = cube.cols();
    h.lines = cube.rows();
    h.bands = cube.bands();
    h.interleave = interleave;
    h.data_type = data_type;
    h.wavelength = cube.grid().centers();

    std::string bytes;
    bytes.reserve(cube.data().size() * envi_element_size(data_type));
    std::vector<double> ordered(cube.data().size());
    for (std::size_t l = 0; l < h.lines; ++l)
        for (std::size_t s = 0; s < h.samples; ++s)
            for (std::size_t b = 0; b < h.bands; ++b) ordered[file_index(h, l, s, b)] = cube.at(l, s, b);
    for (double v : ordered) {
        if (data_type == 4) append_sample(bytes, static_cast<float>(v));
        else append_sample(bytes, v);
    }
    write_file(data_path, bytes);
    write_file(header_path, format_envi_header(h));
}

LabelRaster read_label_raster(const fs::path& header_path, const std::optional<fs::path>& data_path) {
    EnviHeader h;
    const auto values = read_single_band(header_path, data_path, h);
    LabelRaster out;
    out.rows = h.lines;
    out.cols = h.samples;
    out.labels.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::int64_t>(v)) || v > 2147483647.0)
            throw_io("label raster '" + header_path.string() + "' holds a non-integer or negative id");
        out.labels[i] = static_cast<std::int32_t>(v);
    }
    out.class_names = h.class_names;
    out.class_lookup = h.class_lookup;
    return out;
}

void write_label_raster(const LabelRaster& raster, const fs::path& header_path, const fs::path& data_path) {
    if (raster.labels.size() != raster.rows * raster.cols) throw_invalid("label raster size mismatch");
    EnviHeader h;
    h.samples = raster.cols;
    h.lines = raster.rows;
    h.bands = 1;
    h.data_type = 12;
    h.interleave = Interleave::Bsq;
    h.class_lookup = raster.class_lookup;
    h.class_names = raster.class_names;
    if (!raster.class_lookup.empty()) {
        h.file_type = "ENVI Classification";
        h.data_ignore_value = 0.0;
    }
    std::string bytes;
    bytes.reserve(raster.labels.size() * 2);
    for (std::int32_t v : raster.labels) {
        if (v < 0 || v > 65535) throw_invalid("label id " + std::to_string(v) + " does not fit 16-bit unsigned");
        append_sample(bytes, static_cast<std::uint16_t>(v));
    }
    write_file(data_path, bytes);
    write_file(header_path, format_envi_header(h));
}

PixelMask read_mask(const fs::path& header_path, const std::optional<fs::path>& data_path) {
    EnviHeader h;
    const auto values = read_single_band(header_path, data_path, h);
    std::vector<std::uint8_t> keep(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) keep[i] = values[i] != 0.0 ? 1 : 0;
    return PixelMask(h.lines, h.samples, std::move(keep));
}

void write_mask(const PixelMask& mask, const fs::path& header_path, const fs::path& data_path) {
    EnviHeader h;
    h.samples = mask.cols();
    h.lines = mask.rows();
    h.bands = 1;
    h.data_type = 1;
    std::string bytes(mask.flags().begin(), mask.flags().end());
    write_file(data_path, bytes);
    write_file(header_path, format_envi_header(h));
}

}  // namespace gypsum
