#include "dpgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace dpgen {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'G', 'C'};
constexpr uint32_t kVersion = 1;

class ByteSink {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void i64s(const std::vector<int64_t>& v) {
    u64(v.size());
    for (int64_t x : v) i64(x);
  }
  const std::vector<uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class ByteSource {
 public:
  ByteSource(const uint8_t* data, size_t size, std::string context)
      : data_(data), size_(size), context_(std::move(context)) {}

  uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 8;
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const uint64_t n = u64();
    need(n * 8);
    std::vector<double> v(n);
    for (uint64_t i = 0; i < n; ++i) v[i] = f64();
    return v;
  }
  std::vector<int64_t> i64s() {
    const uint64_t n = u64();
    need(n * 8);
    std::vector<int64_t> v(n);
    for (uint64_t i = 0; i < n; ++i) v[i] = i64();
    return v;
  }
  bool exhausted() const { return pos_ == size_; }
  size_t pos() const { return pos_; }

 private:
  void need(uint64_t n) {
    if (pos_ + n > size_)
      throw FormatError(context_ + ": truncated at byte offset " + std::to_string(pos_));
  }
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  std::string context_;
};

void put_param_vector(ByteSink& s, const ParamVector& p) {
  s.u32(static_cast<uint32_t>(p.segments().size()));
  for (const auto& seg : p.segments()) {
    s.str(seg.name);
    s.i64s(seg.shape);
  }
  s.doubles(p.raw());
}

ParamVector get_param_vector(ByteSource& s) {
  const uint32_t nsegs = s.u32();
  ParamVector p;
  for (uint32_t i = 0; i < nsegs; ++i) {
    const std::string name = s.str();
    p.add(name, s.i64s());
  }
  std::vector<double> data = s.doubles();
  if (data.size() != p.size()) throw FormatError("parameter payload does not match segments");
  p.raw() = std::move(data);
  return p;
}

void put_tensor(ByteSink& s, const Tensor& t) {
  s.i64s(t.shape);
  s.doubles(t.data);
}

Tensor get_tensor(ByteSource& s) {
  std::vector<int64_t> shape = s.i64s();
  std::vector<double> data = s.doubles();
  if (shape.empty() && data.empty()) return Tensor{};
  return Tensor(shape, std::move(data));
}

void put_mlp_spec(ByteSink& s, const MlpSpec& spec) {
  s.i64s(spec.widths);
  s.u8(static_cast<uint8_t>(spec.act));
}

MlpSpec get_mlp_spec(ByteSource& s) {
  MlpSpec spec;
  spec.widths = s.i64s();
  spec.act = static_cast<Activation>(s.u8());
  return spec;
}

void put_gen_spec(ByteSink& s, const GeneratorSpec& g) {
  s.i64(g.latent_dim);
  s.i64(g.embed_dim);
  s.i64(g.num_classes);
  s.i64(g.base_h);
  s.i64(g.base_w);
  s.i64s(g.channels);
  s.u8(static_cast<uint8_t>(g.act));
  s.f64(g.head_bias_init);
}

GeneratorSpec get_gen_spec(ByteSource& s) {
  GeneratorSpec g;
  g.latent_dim = s.i64();
  g.embed_dim = s.i64();
  g.num_classes = s.i64();
  g.base_h = s.i64();
  g.base_w = s.i64();
  g.channels = s.i64s();
  g.act = static_cast<Activation>(s.u8());
  g.head_bias_init = s.f64();
  return g;
}

void put_ledger(ByteSink& s, const RdpLedger& l) {
  s.doubles(l.orders);
  s.doubles(l.eps_per_order);
  s.f64(l.gamma);
  s.f64(l.sigma);
  s.i64(l.steps);
}

RdpLedger get_ledger(ByteSource& s) {
  RdpLedger l;
  l.orders = s.doubles();
  l.eps_per_order = s.doubles();
  l.gamma = s.f64();
  l.sigma = s.f64();
  l.steps = s.i64();
  if (l.orders.size() != l.eps_per_order.size())
    throw FormatError("ledger order/eps length mismatch");
  return l;
}

using SectionMap = std::map<std::string, std::vector<uint8_t>>;

void write_container(const std::string& path, uint64_t digest,
                     const std::vector<std::pair<std::string, ByteSink>>& sections) {
  ByteSink out;
  out.u32(kVersion);
  out.u64(digest);
  out.u32(static_cast<uint32_t>(sections.size()));
  for (const auto& [name, sink] : sections) {
    out.str(name);
    out.u64(sink.bytes().size());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f.is_open()) throw FormatError("cannot open file for writing: " + path);
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(out.bytes().data()),
          static_cast<std::streamsize>(out.bytes().size()));
  for (const auto& [name, sink] : sections)
    f.write(reinterpret_cast<const char*>(sink.bytes().data()),
            static_cast<std::streamsize>(sink.bytes().size()));
  if (!f.good()) throw FormatError("short write to " + path);
}

struct Container {
  uint64_t digest = 0;
  SectionMap sections;
};

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f.is_open()) throw FormatError("cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path + ": bad magic at byte offset 0");
  ByteSource src(bytes.data() + 4, bytes.size() - 4, path);
  const uint32_t version = src.u32();
  if (version != kVersion)
    throw FormatError(path + ": unsupported format version " + std::to_string(version));
  Container c;
  c.digest = src.u64();
  const uint32_t nsections = src.u32();
  std::vector<std::pair<std::string, uint64_t>> manifest;
  for (uint32_t i = 0; i < nsections; ++i) {
    std::string name = src.str();
    const uint64_t len = src.u64();
    manifest.emplace_back(std::move(name), len);
  }
  size_t at = 4 + src.pos();
  for (const auto& [name, len] : manifest) {
    if (at + len > bytes.size())
      throw FormatError(path + ": truncated section '" + name + "' at byte offset " +
                        std::to_string(at));
    c.sections[name] = std::vector<uint8_t>(bytes.begin() + static_cast<ptrdiff_t>(at),
                                            bytes.begin() + static_cast<ptrdiff_t>(at + len));
    at += len;
  }
  return c;
}

ByteSource require_section(const Container& c, const std::string& path, const std::string& name) {
  auto it = c.sections.find(name);
  if (it == c.sections.end())
    throw FormatError(path + ": missing required section '" + name + "'");
  return ByteSource(it->second.data(), it->second.size(), path + ":" + name);
}

}  // namespace

void checkpoint_save(const RunState& state, const TrainConfig& cfg, const std::string& path) {
  std::vector<std::pair<std::string, ByteSink>> sections;

  ByteSink meta;
  meta.i64(state.iteration);
  sections.emplace_back("meta", std::move(meta));

  ByteSink cfg_text;
  cfg_text.str(config_to_text(cfg));
  sections.emplace_back("config", std::move(cfg_text));

  ByteSink gspec;
  put_gen_spec(gspec, state.bundle.gen_spec);
  sections.emplace_back("gen.spec", std::move(gspec));
  ByteSink gparams;
  put_param_vector(gparams, state.bundle.gen_params);
  sections.emplace_back("gen.params", std::move(gparams));
  ByteSink gavg;
  put_param_vector(gavg, state.gen_params_avg);
  sections.emplace_back("gen.params_avg", std::move(gavg));
  ByteSink gmom;
  put_param_vector(gmom, state.gen_momentum);
  sections.emplace_back("gen.momentum", std::move(gmom));

  ByteSink dspec;
  put_mlp_spec(dspec, state.bundle.disc_spec);
  sections.emplace_back("disc.spec", std::move(dspec));
  ByteSink dparams;
  dparams.u32(static_cast<uint32_t>(state.bundle.disc_params.size()));
  for (const auto& p : state.bundle.disc_params) put_param_vector(dparams, p);
  sections.emplace_back("disc.params", std::move(dparams));

  ByteSink cspec;
  put_mlp_spec(cspec, state.bundle.cls_spec);
  sections.emplace_back("cls.spec", std::move(cspec));
  ByteSink cparams;
  put_param_vector(cparams, state.bundle.cls_params);
  sections.emplace_back("cls.params", std::move(cparams));

  ByteSink espec;
  put_mlp_spec(espec, state.bundle.enc_spec);
  sections.emplace_back("enc.spec", std::move(espec));
  ByteSink eparams;
  put_param_vector(eparams, state.bundle.enc_params);
  sections.emplace_back("enc.params", std::move(eparams));

  ByteSink ef;
  ef.u8(state.ef.mode == EfMode::PerSource ? 0 : 1);
  ef.i64s(state.ef.shape);
  ef.i64(state.ef.step);
  for (const auto& e : state.ef.errors) put_tensor(ef, e);
  sections.emplace_back("ef", std::move(ef));

  ByteSink ledger;
  put_ledger(ledger, state.ledger);
  sections.emplace_back("ledger", std::move(ledger));

  ByteSink rng;
  {
    RngSet copy = state.rng;
    for (RngStream* s : copy.streams()) {
      rng.u64(s->seed());
      rng.u64(s->position());
    }
  }
  sections.emplace_back("rng", std::move(rng));

  ByteSink part;
  part.u32(static_cast<uint32_t>(state.partition.size()));
  for (const auto& subset : state.partition) part.i64s(subset);
  sections.emplace_back("partition", std::move(part));

  write_container(path, config_digest(cfg), sections);
}

RunState checkpoint_load(const std::string& path, const TrainConfig& cfg) {
  Container c = read_container(path);
  if (c.digest != config_digest(cfg))
    throw FormatError(path + ": checkpoint was written with a different config (digest mismatch)");

  RunState st;
  {
    ByteSource s = require_section(c, path, "meta");
    st.iteration = s.i64();
  }
  {
    ByteSource s = require_section(c, path, "gen.spec");
    st.bundle.gen_spec = get_gen_spec(s);
  }
  {
    ByteSource s = require_section(c, path, "gen.params");
    st.bundle.gen_params = get_param_vector(s);
  }
  {
    ByteSource s = require_section(c, path, "gen.params_avg");
    st.gen_params_avg = get_param_vector(s);
  }
  {
    ByteSource s = require_section(c, path, "gen.momentum");
    st.gen_momentum = get_param_vector(s);
  }
  {
    ByteSource s = require_section(c, path, "disc.spec");
    st.bundle.disc_spec = get_mlp_spec(s);
  }
  {
    ByteSource s = require_section(c, path, "disc.params");
    const uint32_t n = s.u32();
    for (uint32_t i = 0; i < n; ++i) st.bundle.disc_params.push_back(get_param_vector(s));
  }
  {
    ByteSource s = require_section(c, path, "cls.spec");
    st.bundle.cls_spec = get_mlp_spec(s);
  }
  {
    ByteSource s = require_section(c, path, "cls.params");
    st.bundle.cls_params = get_param_vector(s);
  }
  {
    ByteSource s = require_section(c, path, "enc.spec");
    st.bundle.enc_spec = get_mlp_spec(s);
  }
  {
    ByteSource s = require_section(c, path, "enc.params");
    st.bundle.enc_params = get_param_vector(s);
  }
  {
    ByteSource s = require_section(c, path, "ef");
    st.ef.mode = s.u8() == 0 ? EfMode::PerSource : EfMode::Aggregate;
    st.ef.shape = s.i64s();
    st.ef.step = s.i64();
    for (auto& e : st.ef.errors) e = get_tensor(s);
  }
  {
    ByteSource s = require_section(c, path, "ledger");
    st.ledger = get_ledger(s);
  }
  {
    ByteSource s = require_section(c, path, "rng");
    for (RngStream* stream : st.rng.streams()) {
      const uint64_t seed = s.u64();
      const uint64_t pos = s.u64();
      *stream = RngStream(seed, pos);
    }
  }
  {
    ByteSource s = require_section(c, path, "partition");
    const uint32_t k = s.u32();
    for (uint32_t i = 0; i < k; ++i) st.partition.push_back(s.i64s());
  }
  return st;
}

void save_public_generator(const RunState& state, const TrainConfig& cfg, const std::string& path) {
  std::vector<std::pair<std::string, ByteSink>> sections;
  ByteSink meta;
  meta.i64(state.iteration);
  sections.emplace_back("meta", std::move(meta));
  ByteSink gspec;
  put_gen_spec(gspec, state.bundle.gen_spec);
  sections.emplace_back("gen.spec", std::move(gspec));
  ByteSink gparams;
  put_param_vector(gparams, state.release_generator());
  sections.emplace_back("gen.params", std::move(gparams));
  ByteSink noise;
  noise.f64(cfg.sigma_noise);
  sections.emplace_back("noise", std::move(noise));
  ByteSink ledger;
  put_ledger(ledger, state.ledger);
  sections.emplace_back("ledger", std::move(ledger));
  write_container(path, config_digest(cfg), sections);
}

PublicGenerator load_public_generator(const std::string& path) {
  Container c = read_container(path);
  PublicGenerator pg;
  {
    ByteSource s = require_section(c, path, "meta");
    pg.iteration = s.i64();
  }
  {
    ByteSource s = require_section(c, path, "gen.spec");
    pg.spec = get_gen_spec(s);
  }
  {
    ByteSource s = require_section(c, path, "gen.params");
    pg.params = get_param_vector(s);
  }
  {
    ByteSource s = require_section(c, path, "noise");
    pg.noise.sigma_noise = s.f64();
  }
  {
    ByteSource s = require_section(c, path, "ledger");
    pg.ledger = get_ledger(s);
  }
  return pg;
}

void save_discriminator_bank(const MlpSpec& spec, const std::vector<ParamVector>& bank,
                             const TrainConfig& cfg, const std::string& path) {
  std::vector<std::pair<std::string, ByteSink>> sections;
  ByteSink dspec;
  put_mlp_spec(dspec, spec);
  sections.emplace_back("disc.spec", std::move(dspec));
  ByteSink dparams;
  dparams.u32(static_cast<uint32_t>(bank.size()));
  for (const auto& p : bank) put_param_vector(dparams, p);
  sections.emplace_back("disc.params", std::move(dparams));
  write_container(path, config_digest(cfg), sections);
}

std::vector<ParamVector> load_discriminator_bank(const std::string& path, const TrainConfig& cfg) {
  Container c = read_container(path);
  if (c.digest != config_digest(cfg))
    throw FormatError(path + ": bank was written with a different config (digest mismatch)");
  ByteSource spec_src = require_section(c, path, "disc.spec");
  const MlpSpec spec = get_mlp_spec(spec_src);
  if (spec.widths != cfg.discriminator_spec().widths)
    throw FormatError(path + ": bank discriminator architecture does not match config");
  ByteSource s = require_section(c, path, "disc.params");
  const uint32_t n = s.u32();
  std::vector<ParamVector> bank;
  for (uint32_t i = 0; i < n; ++i) bank.push_back(get_param_vector(s));
  return bank;
}

std::vector<std::string> checkpoint_section_names(const std::string& path) {
  Container c = read_container(path);
  std::vector<std::string> names;
  for (const auto& [name, bytes] : c.sections) names.push_back(name);
  return names;
}

}  // namespace dpgen
