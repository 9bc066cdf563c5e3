#include "rppgm/nets/net_json.hpp"

namespace rppgm::nets {

Json spec_to_json(const NetSpec& s) {
    Json j;
    j["input_dim"] = s.input_dim;
    j["output_dim"] = s.output_dim;
    j["hidden"] = s.hidden;
    j["activation"] = to_string(s.activation);
    j["bias"] = s.bias;
    j["head"] = to_string(s.head);
    j["log_std_init"] = s.log_std_init;
    j["log_std_min"] = s.log_std_min;
    j["log_std_max"] = s.log_std_max;
    j["sn"] = s.sn;
    j["sn_mask"] = to_string(s.sn_mask);
    return j;
}

NetSpec spec_from_json(const Json& j) {
    NetSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.output_dim = j.at("output_dim").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.activation = parse_activation(j.at("activation").get<std::string>());
    s.bias = j.at("bias").get<bool>();
    s.head = parse_head(j.at("head").get<std::string>());
    s.log_std_init = j.at("log_std_init").get<double>();
    s.log_std_min = j.at("log_std_min").get<double>();
    s.log_std_max = j.at("log_std_max").get<double>();
    s.sn = j.at("sn").get<bool>();
    s.sn_mask = parse_sn_mask(j.at("sn_mask").get<std::string>());
    return s;
}

Json net_to_json(const GaussianNet& net) {
    Json j;
    j["spec"] = spec_to_json(net.spec());
    Json layers = Json::array();
    for (const auto& l : net.layers()) {
        Json lj;
        lj["shape"] = {l.out, l.in};
        lj["activation"] = to_string(l.activation);
        lj["weight"] = l.weight;
        lj["bias"] = l.bias;
        lj["normalized"] = l.normalized;
        lj["u"] = l.power.u;
        lj["v"] = l.power.v;
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    j["log_std"] = net.log_std();
    return j;
}

GaussianNet net_from_json(const Json& j) {
    Rng scratch(0);
    NetSpec spec = spec_from_json(j.at("spec"));
    const bool sn = spec.sn;
    spec.sn = false; // skip the constructor's power iterations; vectors are restored below
    GaussianNet net(spec, scratch);
    const Json& layers = j.at("layers");
    if (layers.size() != net.layers().size()) throw Error("network json: layer count does not match spec");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Layer& l = net.layers()[i];
        const Json& lj = layers[i];
        auto shape = lj.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2 || shape[0] != l.out || shape[1] != l.in) {
            throw Error("network json: layer " + std::to_string(i) + " shape does not match spec");
        }
        l.activation = parse_activation(lj.at("activation").get<std::string>());
        l.weight = lj.at("weight").get<std::vector<double>>();
        l.bias = lj.at("bias").get<std::vector<double>>();
        l.normalized = lj.at("normalized").get<bool>();
        l.power.u = lj.at("u").get<std::vector<double>>();
        l.power.v = lj.at("v").get<std::vector<double>>();
        if (l.weight.size() != l.in * l.out || (!l.bias.empty() && l.bias.size() != l.out) ||
            l.power.u.size() != l.out || l.power.v.size() != l.in) {
            throw Error("network json: layer " + std::to_string(i) + " array sizes are inconsistent");
        }
    }
    net.log_std() = j.at("log_std").get<std::vector<double>>();
    if (net.log_std().size() != (net.gaussian() ? spec.output_dim : 0)) throw Error("network json: bad log_std size");
    spec.sn = sn;
    return GaussianNet::restore(spec, std::move(net));
}

} // namespace rppgm::nets
