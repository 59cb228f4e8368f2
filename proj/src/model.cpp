#include "bru/model.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "bru/errors.hpp"

namespace bru {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

std::string to_string(Family family) {
  switch (family) {
    case Family::ReLU: return "ReLU";
    case Family::ELU: return "ELU";
    case Family::BRU: return "BRU";
  }
  return "?";
}

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::MLP: return "MLP";
    case Architecture::SAE: return "SAE";
    case Architecture::LeNetS: return "LeNetS";
    case Architecture::ConvPool: return "ConvPool";
  }
  return "?";
}

Family parse_family(const std::string& text) {
  if (text == "ReLU" || text == "relu") return Family::ReLU;
  if (text == "ELU" || text == "elu") return Family::ELU;
  if (text == "BRU" || text == "bru") return Family::BRU;
  throw ConfigError("unknown activation family '" + text + "'");
}

Architecture parse_architecture(const std::string& text) {
  if (text == "MLP" || text == "mlp") return Architecture::MLP;
  if (text == "SAE" || text == "sae") return Architecture::SAE;
  if (text == "LeNetS" || text == "lenet" || text == "LeNet") return Architecture::LeNetS;
  if (text == "ConvPool" || text == "convpool") return Architecture::ConvPool;
  throw ConfigError("unknown experiment '" + text + "'");
}

LayerSpec LayerSpec::dense(std::size_t units, ActivationKind act) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.units = units;
  l.activation = act;
  return l;
}

LayerSpec LayerSpec::conv(std::size_t maps, std::size_t k, std::size_t stride, Padding pad,
                          ActivationKind act) {
  LayerSpec l;
  l.kind = LayerKind::Conv2D;
  l.units = maps;
  l.kh = l.kw = k;
  l.stride = stride;
  l.padding = pad;
  l.activation = act;
  return l;
}

LayerSpec LayerSpec::pool(LayerKind kind, std::size_t k, std::size_t stride, Padding pad,
                          ActivationKind act) {
  LayerSpec l;
  l.kind = kind;
  l.kh = l.kw = k;
  l.stride = stride;
  l.padding = pad;
  l.activation = act;
  return l;
}

LayerSpec LayerSpec::dropout(double keep_prob) {
  LayerSpec l;
  l.kind = LayerKind::Dropout;
  l.keep_prob = keep_prob;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  return l;
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::Dense:
      if (units < 1) throw ConfigError("dense layer needs >= 1 unit");
      break;
    case LayerKind::Conv2D:
      if (units < 1) throw ConfigError("convolution needs >= 1 feature map");
      [[fallthrough]];
    case LayerKind::AvgPool:
    case LayerKind::MaxPool:
      if (kh < 1 || kw < 1 || stride < 1) throw ConfigError("kernel extents and stride must be >= 1");
      break;
    case LayerKind::Dropout:
      if (!(keep_prob > 0.0 && keep_prob <= 1.0))
        throw ConfigError("keep probability must lie in (0, 1]");
      break;
    case LayerKind::Flatten: break;
  }
}

std::vector<ActivationKind> ModelSpec::hidden_activations() const {
  std::vector<ActivationKind> out;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    if (layers[i].activation) out.push_back(*layers[i].activation);
  return out;
}

std::vector<ActivationKind> ModelSpec::weight_layer_activations() const {
  std::vector<ActivationKind> out;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    if (layers[i].has_weights()) out.push_back(*layers[i].activation);
  return out;
}

std::vector<Shape> ModelSpec::shape_trace() const {
  std::vector<Shape> trace{input_shape};
  Shape cur = input_shape;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::Dense:
        if (cur.rank() != 1) throw ShapeError(name + ": dense layer needs a flat input, got " + cur.str());
        cur = Shape{l.units};
        break;
      case LayerKind::Conv2D:
      case LayerKind::AvgPool:
      case LayerKind::MaxPool: {
        if (cur.rank() != 3) throw ShapeError(name + ": spatial layer needs [h,w,maps], got " + cur.str());
        const auto rows = plan_axis(cur[0], l.kh, l.stride, l.padding);
        const auto cols = plan_axis(cur[1], l.kw, l.stride, l.padding);
        cur = Shape{rows.out, cols.out, l.kind == LayerKind::Conv2D ? l.units : cur[2]};
        break;
      }
      case LayerKind::Dropout: break;
      case LayerKind::Flatten: cur = Shape{cur.size()}; break;
    }
    trace.push_back(cur);
  }
  return trace;
}

std::size_t ModelSpec::parameter_count() const {
  const auto trace = shape_trace();
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Shape& in = trace[i];
    const auto& l = layers[i];
    if (l.kind == LayerKind::Dense) total += in[0] * l.units + l.units;
    if (l.kind == LayerKind::Conv2D) total += l.kh * l.kw * in[2] * l.units + l.units;
  }
  return total;
}

namespace {

std::string tag_name(ActivationTag tag) {
  switch (tag) {
    case ActivationTag::ReLU: return "ReLU";
    case ActivationTag::ELU: return "ELU";
    case ActivationTag::ERU: return "ERU";
    case ActivationTag::ORU: return "ORU";
    case ActivationTag::Sigmoid: return "Sigmoid";
    case ActivationTag::Identity: return "Identity";
    case ActivationTag::Softmax: return "Softmax";
  }
  return "?";
}

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t to_size(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + s + "'");
  }
}

double to_real(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + s + "'");
  }
}

std::vector<std::size_t> parse_dims(const std::string& s) {
  std::vector<std::size_t> dims;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) dims.push_back(to_size(part, "dims"));
  return dims;
}

std::string dims_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.rank(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

std::string ModelSpec::serialize() const {
  std::ostringstream os;
  os << "model name=" << name << " architecture=" << to_string(architecture)
     << " family=" << to_string(family) << " input=" << dims_text(input_shape) << '\n';
  for (const auto& l : layers) {
    os << to_string(l.kind);
    if (l.kind == LayerKind::Dense) os << " units=" << l.units;
    if (l.kind == LayerKind::Conv2D) os << " maps=" << l.units;
    if (l.kind == LayerKind::Conv2D || l.kind == LayerKind::AvgPool || l.kind == LayerKind::MaxPool)
      os << " kernel=" << l.kh << 'x' << l.kw << " stride=" << l.stride
         << " padding=" << (l.padding == Padding::Same ? "same" : "valid");
    if (l.kind == LayerKind::Dropout) os << " keep=" << fmt_real(l.keep_prob);
    if (l.activation) {
      os << " activation=" << tag_name(l.activation->tag());
      if (l.activation->has_radix()) os << " radix=" << fmt_real(l.activation->radix().value());
    }
    os << '\n';
  }
  return os.str();
}

ModelSpec ModelSpec::parse(const std::string& text) {
  ModelSpec spec;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::map<std::string, std::string> kv;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw ConfigError("model line " + std::to_string(line_no) + ": expected key=value, got '" + tok + "'");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto get = [&](const std::string& k) -> const std::string& {
      auto it = kv.find(k);
      if (it == kv.end())
        throw ConfigError("model line " + std::to_string(line_no) + ": missing " + k);
      return it->second;
    };
    if (word == "model") {
      spec.name = get("name");
      spec.architecture = parse_architecture(get("architecture"));
      spec.family = parse_family(get("family"));
      spec.input_shape = Shape(parse_dims(get("input")));
      header = true;
      continue;
    }
    if (!header) throw ConfigError("model text must start with a 'model' line");
    LayerSpec l;
    if (word == "dense") {
      l.kind = LayerKind::Dense;
      l.units = to_size(get("units"), "units");
    } else if (word == "conv2d" || word == "avgpool" || word == "maxpool") {
      l.kind = word == "conv2d" ? LayerKind::Conv2D
               : word == "avgpool" ? LayerKind::AvgPool
                                   : LayerKind::MaxPool;
      if (l.kind == LayerKind::Conv2D) l.units = to_size(get("maps"), "maps");
      const auto k = parse_dims(get("kernel"));
      if (k.size() != 2) throw ConfigError("kernel must be HxW");
      l.kh = k[0];
      l.kw = k[1];
      l.stride = to_size(get("stride"), "stride");
      const std::string& pad = get("padding");
      if (pad != "same" && pad != "valid") throw ConfigError("padding must be same or valid");
      l.padding = pad == "same" ? Padding::Same : Padding::Valid;
    } else if (word == "dropout") {
      l.kind = LayerKind::Dropout;
      l.keep_prob = to_real(get("keep"), "keep");
    } else if (word == "flatten") {
      l.kind = LayerKind::Flatten;
    } else {
      throw ConfigError("model line " + std::to_string(line_no) + ": unknown layer '" + word + "'");
    }
    if (kv.count("activation")) {
      const std::string& a = kv["activation"];
      if (a == "ERU" || a == "ORU") {
        const double r = to_real(get("radix"), "radix");
        l.activation = a == "ERU" ? ActivationKind::eru(r) : ActivationKind::oru(r);
      } else {
        l.activation = ActivationKind::parse(a);
      }
    }
    l.validate();
    spec.layers.push_back(l);
  }
  if (!header || spec.layers.empty()) throw ConfigError("model text has no layers");
  return spec;
}

namespace {

ActivationKind family_activation(Family family, const ActivationKind& bru) {
  switch (family) {
    case Family::ReLU: return ActivationKind::relu();
    case Family::ELU: return ActivationKind::elu();
    case Family::BRU: return bru;
  }
  return bru;
}

}  // namespace

ModelSpec build_mlp(int depth, Family family) {
  if (depth < 4 || depth > 8)
    throw ConfigError("MLP depth must lie in 4..8, got " + std::to_string(depth));
  ModelSpec spec;
  spec.name = "MLP(" + std::to_string(depth) + ")";
  spec.architecture = Architecture::MLP;
  spec.family = family;
  spec.input_shape = Shape{28, 28, 1};
  spec.layers.push_back(LayerSpec::flatten());
  for (int i = 0; i < depth; ++i) {
    const ActivationKind bru = i == 0           ? ActivationKind::oru(3)
                               : i == depth - 1 ? ActivationKind::eru(2)
                                                : ActivationKind::oru(2);
    spec.layers.push_back(LayerSpec::dense(128, family_activation(family, bru)));
  }
  spec.layers.push_back(LayerSpec::dense(10, ActivationKind::softmax()));
  return spec;
}

ModelSpec build_sae(Family family) {
  ModelSpec spec;
  spec.name = "SAE";
  spec.architecture = Architecture::SAE;
  spec.family = family;
  spec.input_shape = Shape{28, 28, 1};
  spec.layers.push_back(LayerSpec::flatten());
  const std::size_t widths[] = {1000, 500, 250, 30, 250, 500, 1000};
  for (std::size_t i = 0; i < std::size(widths); ++i) {
    const ActivationKind bru = i + 1 == std::size(widths) ? ActivationKind::eru(1) : ActivationKind::oru(2);
    spec.layers.push_back(LayerSpec::dense(widths[i], family_activation(family, bru)));
  }
  spec.layers.push_back(LayerSpec::dense(784, ActivationKind::sigmoid()));
  return spec;
}

ModelSpec build_lenet(Family family) {
  ModelSpec spec;
  spec.name = "LeNetS";
  spec.architecture = Architecture::LeNetS;
  spec.family = family;
  spec.input_shape = Shape{28, 28, 1};
  auto act = [&](const ActivationKind& bru) { return family_activation(family, bru); };
  const ActivationKind pool_act = act(ActivationKind::eru(1));
  spec.layers = {
      LayerSpec::conv(6, 5, 1, Padding::Same, act(ActivationKind::eru(3))),
      LayerSpec::pool(LayerKind::AvgPool, 2, 2, Padding::Same, pool_act),
      LayerSpec::conv(16, 5, 1, Padding::Same, act(ActivationKind::oru(2))),
      LayerSpec::pool(LayerKind::AvgPool, 2, 2, Padding::Same, pool_act),
      LayerSpec::conv(120, 5, 1, Padding::Same, act(ActivationKind::oru(2))),
      LayerSpec::flatten(),
      LayerSpec::dense(84, act(ActivationKind::eru(2))),
      LayerSpec::dense(10, ActivationKind::softmax()),
  };
  return spec;
}

ModelSpec build_convpool(int classes, Family family, std::size_t conv9_maps) {
  if (classes != 10 && classes != 100)
    throw ConfigError("ConvPool classes must be 10 or 100, got " + std::to_string(classes));
  if (conv9_maps < 1) throw ConfigError("conv9 maps must be >= 1");
  ModelSpec spec;
  spec.name = "ConvPool(" + std::to_string(classes) + ")";
  spec.architecture = Architecture::ConvPool;
  spec.family = family;
  spec.input_shape = Shape{32, 32, 3};
  auto act = [&](const ActivationKind& bru) { return family_activation(family, bru); };
  const auto S = Padding::Same, V = Padding::Valid;
  spec.layers = {
      LayerSpec::conv(96, 3, 1, S, act(ActivationKind::eru(3))),
      LayerSpec::conv(96, 2, 1, V, act(ActivationKind::oru(3))),
      LayerSpec::pool(LayerKind::MaxPool, 3, 2, V, act(ActivationKind::eru(1))),
      LayerSpec::dropout(0.5),
      LayerSpec::conv(192, 3, 1, S, act(ActivationKind::eru(2))),
      LayerSpec::conv(192, 3, 1, S, act(ActivationKind::oru(2))),
      LayerSpec::pool(LayerKind::MaxPool, 3, 2, V, act(ActivationKind::eru(1))),
      LayerSpec::dropout(0.5),
      LayerSpec::conv(192, 3, 1, S, act(ActivationKind::eru(2))),
      LayerSpec::conv(192, 1, 1, S, act(ActivationKind::oru(2))),
      LayerSpec::conv(conv9_maps, 1, 1, S, act(ActivationKind::eru(1))),
      LayerSpec::pool(LayerKind::AvgPool, 6, 1, S, act(ActivationKind::eru(1))),
      LayerSpec::flatten(),
      LayerSpec::dense(static_cast<std::size_t>(classes), ActivationKind::softmax()),
  };
  return spec;
}

}  // namespace bru
