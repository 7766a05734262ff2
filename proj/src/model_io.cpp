#include "ringflow/model_io.hpp"

#include <cstring>
#include <sstream>

#include "ringflow/errors.hpp"
#include "ringflow/io_util.hpp"

namespace ringflow {

namespace {

constexpr char kMagic[8] = {'R', 'G', 'F', 'M', '0', '0', '0', '1'};

void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof(bits));
  put_u64(out, bits);
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void put_tensor(std::string& out, const Tensor& t) {
  put_u64(out, t.size());
  for (double x : t) put_f64(out, x);
}

void put_net(std::string& out, const DenseNet& net) {
  put_u32(out, static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (int s : net.layer_sizes) put_u32(out, static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    put_tensor(out, net.weights[l]);
    put_tensor(out, net.biases[l]);
  }
}

std::string descriptor_text(const MacroDescriptor& d) {
  std::ostringstream out;
  out << "v_bar_gt = " << format_double(d.v_bar_gt) << "\n";
  out << "d_bar = " << format_double(d.d_bar) << "\n";
  out << "d_min = " << format_double(d.d_min) << "\n";
  out << "d_max = " << format_double(d.d_max) << "\n";
  out << "v_min = " << format_double(d.v_min) << "\n";
  out << "v_max = " << format_double(d.v_max) << "\n";
  return out.str();
}

class Reader {
 public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i)
      x |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return x;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i)
      x |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    pos_ += 8;
    return x;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double x;
    std::memcpy(&x, &bits, sizeof(x));
    return x;
  }

  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s = data_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  Tensor tensor() {
    const std::uint64_t count = u64();
    if (count > (data_.size() - pos_) / 8) corrupt("tensor overruns file");
    Tensor t(static_cast<std::size_t>(count));
    for (auto& x : t) x = f64();
    return t;
  }

  DenseNet net() {
    DenseNet n;
    const std::uint32_t sizes = u32();
    if (sizes < 2 || sizes > 64) corrupt("implausible layer count");
    for (std::uint32_t i = 0; i < sizes; ++i)
      n.layer_sizes.push_back(static_cast<int>(u32()));
    for (std::uint32_t l = 0; l + 1 < sizes; ++l) {
      n.weights.push_back(tensor());
      n.biases.push_back(tensor());
      const std::size_t expected_w =
          static_cast<std::size_t>(n.layer_sizes[l]) *
          static_cast<std::size_t>(n.layer_sizes[l + 1]);
      if (n.weights.back().size() != expected_w ||
          n.biases.back().size() !=
              static_cast<std::size_t>(n.layer_sizes[l + 1]))
        corrupt("tensor shape does not match layer sizes");
    }
    return n;
  }

  void magic() {
    need(8);
    if (std::memcmp(data_.data(), kMagic, 8) != 0)
      corrupt("bad magic; not a model file");
    pos_ += 8;
  }

  void done() {
    if (pos_ != data_.size()) corrupt("trailing bytes");
  }

  [[noreturn]] void corrupt(const std::string& what) {
    throw ConfigError("corrupt model file " + path_ + ": " + what);
  }

 private:
  void need(std::size_t bytes) {
    if (data_.size() - pos_ < bytes) corrupt("truncated");
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

MacroDescriptor parse_descriptor(Reader& r, const std::string& text) {
  MacroDescriptor d;
  std::istringstream in(text);
  std::string key, eq, value;
  int seen = 0;
  while (in >> key >> eq >> value) {
    const double x = std::stod(value);
    if (key == "v_bar_gt")
      d.v_bar_gt = x;
    else if (key == "d_bar")
      d.d_bar = x;
    else if (key == "d_min")
      d.d_min = x;
    else if (key == "d_max")
      d.d_max = x;
    else if (key == "v_min")
      d.v_min = x;
    else if (key == "v_max")
      d.v_max = x;
    else
      r.corrupt("unknown descriptor key: " + key);
    ++seen;
  }
  if (seen != 6) r.corrupt("incomplete descriptor block");
  return d;
}

}  // namespace

void save_generator(const GeneratorModel& model, const std::string& path) {
  std::string out(kMagic, 8);
  put_string(out, "generator");
  put_string(out, descriptor_text(model.descriptor));
  put_u32(out, static_cast<std::uint32_t>(model.n_vehicles));
  put_u32(out, static_cast<std::uint32_t>(model.k_max));
  put_net(out, model.trunk);
  put_tensor(out, model.log_std);
  atomic_write_file(path, out);
}

void save_policy(const PolicyModel& model, const std::string& path) {
  std::string out(kMagic, 8);
  put_string(out, "policy");
  put_string(out, descriptor_text(model.descriptor));
  put_f64(out, model.bounds.a_min);
  put_f64(out, model.bounds.a_max);
  put_f64(out, model.bounds.v_min);
  put_f64(out, model.bounds.v_max);
  put_net(out, model.actor);
  put_tensor(out, model.log_std);
  put_net(out, model.critic);
  atomic_write_file(path, out);
}

std::string model_role(const std::string& path) {
  if (!file_exists(path)) throw ConfigError("model file not found: " + path);
  Reader r(read_text_file(path), path);
  r.magic();
  return r.str();
}

GeneratorModel load_generator(const std::string& path) {
  if (!file_exists(path)) throw ConfigError("model file not found: " + path);
  Reader r(read_text_file(path), path);
  r.magic();
  const std::string role = r.str();
  if (role != "generator")
    throw ConfigError("model role mismatch: " + path + " holds '" + role +
                      "', expected 'generator'");
  GeneratorModel model;
  model.descriptor = parse_descriptor(r, r.str());
  model.n_vehicles = static_cast<int>(r.u32());
  model.k_max = static_cast<int>(r.u32());
  model.trunk = r.net();
  model.log_std = r.tensor();
  r.done();
  if (model.trunk.input_size() != generator_context_dim(model.n_vehicles) ||
      model.trunk.output_size() != 2 || model.log_std.size() != 2)
    r.corrupt("generator shape mismatch");
  return model;
}

PolicyModel load_policy(const std::string& path) {
  if (!file_exists(path)) throw ConfigError("model file not found: " + path);
  Reader r(read_text_file(path), path);
  r.magic();
  const std::string role = r.str();
  if (role != "policy")
    throw ConfigError("model role mismatch: " + path + " holds '" + role +
                      "', expected 'policy'");
  PolicyModel model;
  model.descriptor = parse_descriptor(r, r.str());
  model.bounds.a_min = r.f64();
  model.bounds.a_max = r.f64();
  model.bounds.v_min = r.f64();
  model.bounds.v_max = r.f64();
  model.actor = r.net();
  model.log_std = r.tensor();
  model.critic = r.net();
  r.done();
  if (model.actor.input_size() != 4 || model.actor.output_size() != 1 ||
      model.critic.input_size() != 4 || model.critic.output_size() != 1 ||
      model.log_std.size() != 1)
    r.corrupt("policy shape mismatch");
  return model;
}

std::string snapshot_to_text(const Snapshot& snapshot) {
  std::ostringstream out;
  out << "# columns: index theta v observed\n";
  for (std::size_t i = 0; i < snapshot.size(); ++i)
    out << i << '\t' << format_double(snapshot.vehicles[i].theta) << '\t'
        << format_double(snapshot.vehicles[i].v) << '\t'
        << (snapshot.observed[i] ? 1 : 0) << '\n';
  return out.str();
}

Snapshot snapshot_from_text(const std::string& text) {
  std::istringstream in(text);
  Snapshot snap;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t index = 0;
    double theta = 0.0, v = 0.0;
    int observed = 0;
    if (!(ls >> index >> theta >> v >> observed))
      throw std::runtime_error("malformed snapshot line: " + line);
    if (index != snap.size())
      throw std::runtime_error("snapshot lines out of order");
    snap.vehicles.push_back({theta, v});
    snap.observed.push_back(static_cast<std::uint8_t>(observed ? 1 : 0));
  }
  validate_snapshot(snap);
  return snap;
}

}  // namespace ringflow
