#include "damgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace damgan::checkpoint {

static_assert(std::endian::native == std::endian::little, "payload is written in native order");

using nlohmann::json;

std::uint64_t fnv1a64(const char* data, std::size_t size) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

json to_json(const model::ModelConfig& c) {
  return {{"resolution", c.resolution},
          {"coarse_levels", c.coarse_levels},
          {"dam_levels", c.dam_levels},
          {"base_width", c.base_width},
          {"max_width_multiplier", c.max_width_multiplier},
          {"dilation_rates", c.dilation_rates},
          {"norm", c.norm == model::Norm::instance ? "instance" : "none"},
          {"leaky_slope", c.leaky_slope},
          {"disc_base_width", c.disc_base_width}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig c;
  c.resolution = j.at("resolution").get<Index>();
  c.coarse_levels = j.at("coarse_levels").get<int>();
  c.dam_levels = j.at("dam_levels").get<int>();
  c.base_width = j.at("base_width").get<Index>();
  c.max_width_multiplier = j.at("max_width_multiplier").get<int>();
  c.dilation_rates = j.at("dilation_rates").get<std::vector<int>>();
  c.norm = j.at("norm").get<std::string>() == "instance" ? model::Norm::instance : model::Norm::none;
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.disc_base_width = j.at("disc_base_width").get<Index>();
  return c;
}

namespace {

template <typename T>
json range_json(const data::Range<T>& r) {
  return json::array({r.lo, r.hi});
}

template <typename T>
data::Range<T> range_from(const json& j) {
  return {j.at(0).get<T>(), j.at(1).get<T>()};
}

json mask_json(const data::MaskSpec& m) {
  return {{"mode", m.mode == data::MaskMode::center ? "center" : "free_form"},
          {"resolution", m.resolution},
          {"center_size", m.center_size},
          {"stroke_count", range_json(m.stroke_count)},
          {"stroke_width", range_json(m.stroke_width)},
          {"vertex_count", range_json(m.vertex_count)},
          {"segment_length", range_json(m.segment_length)},
          {"max_turn_angle", m.max_turn_angle},
          {"coverage", range_json(m.coverage)},
          {"max_attempts", m.max_attempts},
          {"seed", m.seed}};
}

data::MaskSpec mask_from(const json& j) {
  data::MaskSpec m;
  m.mode = j.at("mode").get<std::string>() == "center" ? data::MaskMode::center : data::MaskMode::free_form;
  m.resolution = j.at("resolution").get<Index>();
  m.center_size = j.at("center_size").get<Index>();
  m.stroke_count = range_from<int>(j.at("stroke_count"));
  m.stroke_width = range_from<double>(j.at("stroke_width"));
  m.vertex_count = range_from<int>(j.at("vertex_count"));
  m.segment_length = range_from<double>(j.at("segment_length"));
  m.max_turn_angle = j.at("max_turn_angle").get<double>();
  m.coverage = range_from<double>(j.at("coverage"));
  m.max_attempts = j.at("max_attempts").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

}  // namespace

json to_json(const train::TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"steps", c.steps},
          {"lr_g", c.lr_g},
          {"lr_d", c.lr_d},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"d_steps_per_g", c.d_steps_per_g},
          {"lambda_re", c.weights.re},
          {"lambda_adv", c.weights.adv},
          {"lambda_dam", c.weights.dam},
          {"mask", mask_json(c.mask_spec)},
          {"mask_schedule", train::to_string(c.mask_schedule)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"eval_every", c.eval_every}};
}

train::TrainConfig train_config_from_json(const json& j) {
  train::TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.steps = j.at("steps").get<std::int64_t>();
  c.lr_g = j.at("lr_g").get<double>();
  c.lr_d = j.at("lr_d").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.d_steps_per_g = j.at("d_steps_per_g").get<int>();
  c.weights = {j.at("lambda_re").get<double>(), j.at("lambda_adv").get<double>(),
               j.at("lambda_dam").get<double>()};
  c.mask_spec = mask_from(j.at("mask"));
  c.mask_schedule = train::parse_mask_schedule(j.at("mask_schedule").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
  c.eval_every = j.at("eval_every").get<std::int64_t>();
  return c;
}

namespace {

struct Block {
  std::string name;
  const Tensor<float>* tensor;
};

void collect(std::vector<Block>& blocks, const std::string& prefix,
             const model::ParameterStore<float>& store) {
  for (const auto& [name, t] : store) blocks.push_back({prefix + name, &t});
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[at + std::size_t(i)])) << (8 * i);
  return v;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

std::string serialize(const train::TrainState& s) {
  std::vector<Block> blocks;
  collect(blocks, "gen/", s.generator);
  collect(blocks, "disc/", s.discriminator);
  collect(blocks, "adam_g.m/", s.opt_g.m);
  collect(blocks, "adam_g.v/", s.opt_g.v);
  collect(blocks, "adam_d.m/", s.opt_d.m);
  collect(blocks, "adam_d.v/", s.opt_d.v);

  std::string payload;
  json index = json::array();
  for (const auto& b : blocks) {
    const Shape sh = b.tensor->shape();
    index.push_back({{"name", b.name},
                     {"offset", payload.size()},
                     {"shape", json::array({sh.n, sh.c, sh.h, sh.w})}});
    payload.append(reinterpret_cast<const char*>(b.tensor->data()),
                   std::size_t(b.tensor->size()) * sizeof(float));
  }

  std::ostringstream rng;
  rng << s.rng;
  const json header = {{"format_version", kFormatVersion},
                       {"model", to_json(s.model)},
                       {"train", to_json(s.config)},
                       {"step", s.step},
                       {"rng_state", rng.str()},
                       {"adam_g_t", s.opt_g.t},
                       {"adam_d_t", s.opt_d.t},
                       {"init_scheme", s.generator.init_scheme()},
                       {"tensors", index},
                       {"payload_bytes", payload.size()},
                       {"payload_fnv1a64", hex(fnv1a64(payload.data(), payload.size()))}};
  const std::string h = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, h.size());
  out += h;
  out += payload;
  return out;
}

train::TrainState deserialize(const std::string& bytes) {
  auto fail = [](const std::string& what) -> void {
    throw IntegrityError("checkpoint integrity failure: " + what);
  };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) fail("bad magic");
  const std::uint64_t hlen = get_u64(bytes, 8);
  if (hlen > bytes.size() - 16) fail("truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(16, hlen));
  } catch (const json::exception& e) {
    fail(std::string("unparseable header: ") + e.what());
  }
  const std::string payload = bytes.substr(16 + hlen);

  train::TrainState s;
  try {
    if (header.at("format_version").get<int>() != kFormatVersion) fail("unsupported format_version");
    if (header.at("payload_bytes").get<std::size_t>() != payload.size()) fail("payload size mismatch");
    if (header.at("payload_fnv1a64").get<std::string>() != hex(fnv1a64(payload.data(), payload.size()))) {
      fail("checksum mismatch");
    }
    s.model = model_config_from_json(header.at("model"));
    s.config = train_config_from_json(header.at("train"));
    s.step = header.at("step").get<std::int64_t>();
    std::istringstream rng(header.at("rng_state").get<std::string>());
    rng >> s.rng;
    if (!rng) fail("bad rng_state");
    s.opt_g.t = header.at("adam_g_t").get<std::int64_t>();
    s.opt_d.t = header.at("adam_d_t").get<std::int64_t>();
    const std::string scheme = header.at("init_scheme").get<std::string>();

    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto dims = entry.at("shape").get<std::vector<Index>>();
      if (dims.size() != 4) fail("tensor " + name + " has a non-4-D shape");
      const Shape sh{dims[0], dims[1], dims[2], dims[3]};
      const std::size_t nbytes = std::size_t(sh.size()) * sizeof(float);
      if (sh.size() < 0 || offset > payload.size() || nbytes > payload.size() - offset) {
        fail("tensor " + name + " lies outside the payload");
      }
      Tensor<float> t(sh);
      std::memcpy(t.data(), payload.data() + offset, nbytes);

      const auto slash = name.find('/');
      if (slash == std::string::npos) fail("tensor name without group: " + name);
      const std::string group = name.substr(0, slash);
      const std::string param = name.substr(slash + 1);
      if (group == "gen") s.generator.add(param, std::move(t));
      else if (group == "disc") s.discriminator.add(param, std::move(t));
      else if (group == "adam_g.m") s.opt_g.m.add(param, std::move(t));
      else if (group == "adam_g.v") s.opt_g.v.add(param, std::move(t));
      else if (group == "adam_d.m") s.opt_d.m.add(param, std::move(t));
      else if (group == "adam_d.v") s.opt_d.v.add(param, std::move(t));
      else fail("unknown tensor group " + group);
    }
    s.generator.set_init_scheme(scheme);
    s.discriminator.set_init_scheme(scheme);
    s.opt_g.m.set_init_scheme(scheme);
    s.opt_g.v.set_init_scheme(scheme);
    s.opt_d.m.set_init_scheme(scheme);
    s.opt_d.v.set_init_scheme(scheme);
  } catch (const json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (s.opt_g.m.size() != s.generator.size() || s.opt_g.v.size() != s.generator.size() ||
      s.opt_d.m.size() != s.discriminator.size() || s.opt_d.v.size() != s.discriminator.size()) {
    fail("optimizer moments do not cover the parameters");
  }
  return s;
}

void save(const std::filesystem::path& file, const train::TrainState& state) {
  const std::string bytes = serialize(state);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  out.flush();
  if (!out) throw std::runtime_error("failed writing checkpoint " + file.string());
}

train::TrainState load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace damgan::checkpoint
