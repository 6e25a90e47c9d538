#include "eqn/trace.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eqn/errors.hpp"

namespace eqn {

namespace {

constexpr char kMagic[8] = {'E', 'Q', 'N', 'T', 'R', '0', '0', '1'};

void put_string(std::ofstream& f, const std::string& s) {
  const std::uint32_t n = std::uint32_t(s.size());
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  f.write(s.data(), n);
}

std::string get_string(std::ifstream& f) {
  std::uint32_t n;
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!f || n > (1u << 20)) throw std::runtime_error("trace: bad string field");
  std::string s(n, '\0');
  f.read(s.data(), n);
  if (!f) throw std::runtime_error("trace: truncated string field");
  return s;
}

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("trace: truncated file");
  return v;
}

std::string sidecar_path(const std::string& path) { return path + ".meta"; }

}  // namespace

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct TraceWriter::Impl {
  std::ofstream file;
  TraceMeta meta;
  bool binary = true;
  std::size_t header_bytes = 0;
};

namespace {

std::size_t binary_header_size(const TraceMeta& m) {
  std::size_t n = sizeof(kMagic) + 3 * sizeof(std::uint64_t) + 2 * sizeof(std::uint32_t) + 1;
  n += sizeof(std::uint32_t) + m.sampler.size();
  n += sizeof(std::uint32_t) + m.preset.size();
  for (const auto& c : m.columns) n += sizeof(std::uint32_t) + c.size();
  return n;
}

void write_binary_header(std::ofstream& f, const TraceMeta& m) {
  f.write(kMagic, sizeof(kMagic));
  put(f, m.seed);
  put(f, m.config_hash);
  put(f, m.target_hash);
  put(f, std::uint32_t(m.walkers));
  put(f, std::uint32_t(m.columns.size()));
  const char biased = m.biased ? 1 : 0;
  f.write(&biased, 1);
  put_string(f, m.sampler);
  put_string(f, m.preset);
  for (const auto& c : m.columns) put_string(f, c);
}

std::string text_header(const TraceMeta& m) {
  std::ostringstream os;
  os << "# eqn-trace v1\n";
  os << "# sampler=" << m.sampler << "\n";
  os << "# preset=" << m.preset << "\n";
  os << "# seed=" << m.seed << "\n";
  os << "# config_hash=" << m.config_hash << "\n";
  os << "# target_hash=" << m.target_hash << "\n";
  os << "# biased=" << (m.biased ? 1 : 0) << "\n";
  os << "# walkers=" << m.walkers << "\n";
  os << "# columns=iteration walker";
  for (const auto& c : m.columns) os << " " << c;
  os << "\n";
  return os.str();
}

}  // namespace

TraceWriter::TraceWriter(const std::string& path, const TraceMeta& meta, bool binary,
                         std::uint64_t resume_rows)
    : impl_(new Impl), path_(path) {
  impl_->meta = meta;
  impl_->binary = binary;
  if (resume_rows == 0) {
    impl_->file.open(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!impl_->file) throw std::runtime_error("trace: cannot write " + path);
    if (binary) {
      write_binary_header(impl_->file, meta);
    } else {
      impl_->file << text_header(meta);
    }
  } else {
    // verify the existing file really ends after resume_rows rows
    if (binary) {
      const std::size_t want = binary_header_size(meta) +
                               resume_rows * meta.walkers * meta.columns.size() *
                                   sizeof(double);
      const auto have = std::filesystem::file_size(path);
      if (have < want)
        throw std::runtime_error("trace: existing file shorter than checkpointed rows");
      if (have > want) std::filesystem::resize_file(path, want);
      impl_->file.open(path, std::ios::binary | std::ios::in | std::ios::out);
      impl_->file.seekp(std::streamoff(want));
    } else {
      impl_->file.open(path, std::ios::app);
    }
    if (!impl_->file) throw std::runtime_error("trace: cannot append to " + path);
    rows_ = resume_rows;
  }
}

TraceWriter::~TraceWriter() = default;

void TraceWriter::append(std::uint64_t iteration, ConstSpan row_block) {
  const std::size_t cols = impl_->meta.columns.size();
  if (row_block.size() != std::size_t(impl_->meta.walkers) * cols)
    throw std::invalid_argument("trace: row block size mismatch");
  if (impl_->binary) {
    impl_->file.write(reinterpret_cast<const char*>(row_block.data()),
                      std::streamsize(sizeof(double)) * std::streamsize(row_block.size()));
  } else {
    auto& f = impl_->file;
    f.precision(17);
    for (int w = 0; w < impl_->meta.walkers; ++w) {
      f << iteration << " " << w;
      for (std::size_t c = 0; c < cols; ++c) f << " " << row_block[w * cols + c];
      f << "\n";
    }
  }
  ++rows_;
}

void TraceWriter::flush() { impl_->file.flush(); }

void TraceWriter::finalize(const TraceSidecar& s) {
  impl_->file.flush();
  std::ofstream m(sidecar_path(path_), std::ios::trunc);
  if (!m) throw std::runtime_error("trace: cannot write sidecar for " + path_);
  m.precision(17);
  m << "grads_per_iteration=" << s.grads_per_iteration << "\n";
  m << "seconds_per_iteration=" << s.seconds_per_iteration << "\n";
  m << "acceptance_rate=" << s.acceptance_rate << "\n";
  m << "step_errors=" << s.step_errors << "\n";
  m << "iterations=" << s.iterations << "\n";
}

int ChainTrace::column(const std::string& name) const {
  for (std::size_t i = 0; i < meta.columns.size(); ++i)
    if (meta.columns[i] == name) return int(i);
  return -1;
}

Vec ChainTrace::walker_series(int walker, int col) const {
  Vec out(rows);
  for (std::uint64_t t = 0; t < rows; ++t) out[t] = value(t, walker, col);
  return out;
}

Vec ChainTrace::ensemble_mean_series(int col) const {
  Vec out(rows, 0.0);
  for (std::uint64_t t = 0; t < rows; ++t) {
    double s = 0.0;
    for (int w = 0; w < meta.walkers; ++w) s += value(t, w, col);
    out[t] = s / meta.walkers;
  }
  return out;
}

double ChainTrace::mean(int col) const {
  double s = 0.0;
  for (std::uint64_t t = 0; t < rows; ++t)
    for (int w = 0; w < meta.walkers; ++w) s += value(t, w, col);
  return rows ? s / double(rows * std::uint64_t(meta.walkers)) : 0.0;
}

namespace {

TraceSidecar read_sidecar(const std::string& path) {
  TraceSidecar s;
  std::ifstream f(sidecar_path(path));
  if (!f) return s;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "grads_per_iteration") s.grads_per_iteration = std::stod(val);
    else if (key == "seconds_per_iteration") s.seconds_per_iteration = std::stod(val);
    else if (key == "acceptance_rate") s.acceptance_rate = std::stod(val);
    else if (key == "step_errors") s.step_errors = std::stoull(val);
    else if (key == "iterations") s.iterations = std::stoull(val);
  }
  return s;
}

ChainTrace read_binary(std::ifstream& f, const std::string& path) {
  ChainTrace t;
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("trace: bad magic in " + path);
  t.meta.seed = get<std::uint64_t>(f);
  t.meta.config_hash = get<std::uint64_t>(f);
  t.meta.target_hash = get<std::uint64_t>(f);
  t.meta.walkers = int(get<std::uint32_t>(f));
  const auto cols = get<std::uint32_t>(f);
  char biased;
  f.read(&biased, 1);
  t.meta.biased = biased != 0;
  t.meta.sampler = get_string(f);
  t.meta.preset = get_string(f);
  for (std::uint32_t c = 0; c < cols; ++c) t.meta.columns.push_back(get_string(f));

  const std::size_t row_doubles = std::size_t(t.meta.walkers) * cols;
  std::vector<double> row(row_doubles);
  while (f.read(reinterpret_cast<char*>(row.data()),
                std::streamsize(sizeof(double)) * std::streamsize(row_doubles))) {
    t.data.insert(t.data.end(), row.begin(), row.end());
    ++t.rows;
  }
  return t;
}

ChainTrace read_text(const std::string& path) {
  std::ifstream f(path);
  ChainTrace t;
  std::string line;
  bool saw_header = false;
  while (std::getline(f, line)) {
    if (line.rfind("# ", 0) == 0) {
      const std::string body = line.substr(2);
      const auto eq = body.find('=');
      if (body == "eqn-trace v1") {
        saw_header = true;
        continue;
      }
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq);
      const std::string val = body.substr(eq + 1);
      if (key == "sampler") t.meta.sampler = val;
      else if (key == "preset") t.meta.preset = val;
      else if (key == "seed") t.meta.seed = std::stoull(val);
      else if (key == "config_hash") t.meta.config_hash = std::stoull(val);
      else if (key == "target_hash") t.meta.target_hash = std::stoull(val);
      else if (key == "biased") t.meta.biased = val == "1";
      else if (key == "walkers") t.meta.walkers = std::stoi(val);
      else if (key == "columns") {
        std::istringstream is(val);
        std::string c;
        is >> c >> c;  // skip iteration, walker
        while (is >> c) t.meta.columns.push_back(c);
      }
      continue;
    }
    if (!saw_header) throw std::runtime_error("trace: not a trace file: " + path);
    std::istringstream is(line);
    std::uint64_t iter;
    int walker;
    is >> iter >> walker;
    double v;
    std::size_t got = 0;
    while (is >> v && got < t.meta.columns.size()) {
      t.data.push_back(v);
      ++got;
    }
    if (got != t.meta.columns.size())
      throw std::runtime_error("trace: short row in " + path);
    if (walker == t.meta.walkers - 1) ++t.rows;
  }
  return t;
}

}  // namespace

ChainTrace read_trace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("trace: cannot read " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  ChainTrace t;
  if (f && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0) {
    f.seekg(0);
    t = read_binary(f, path);
  } else {
    t = read_text(path);
  }
  t.sidecar = read_sidecar(path);
  return t;
}

}  // namespace eqn
