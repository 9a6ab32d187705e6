#include "ladle/model.hpp"

namespace ladle {

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    init_unimodal_encoder(m.params, "txt_enc", cfg, true, seed);
    init_unimodal_encoder(m.params, "img_enc", cfg, false, seed);
    if (cfg.use_reference_branch) init_reference_encoder(m.params, cfg, seed);
    init_fusion(m.params, cfg, seed);
    init_heads(m.params, cfg, seed);
    return m;
}

FreezePolicy Model::pretrain_policy() const {
    FreezePolicy p;
    p.name = "pretrain";
    p.rules.push_back({"ref_enc.*", false});
    const size_t last = std::min<size_t>(3, cfg.encoder_layers);
    for (size_t i = cfg.encoder_layers - last; i < cfg.encoder_layers; ++i) {
        p.rules.push_back({"txt_enc.layer" + std::to_string(i) + ".*", true});
        p.rules.push_back({"img_enc.layer" + std::to_string(i) + ".*", true});
    }
    p.rules.push_back({"txt_enc.cproj.*", true});
    p.rules.push_back({"img_enc.cproj.*", true});
    p.rules.push_back({"fusion.*", true});
    p.rules.push_back({"heads.*", true});
    p.default_trainable = false;
    return p;
}

FreezePolicy Model::finetune_policy() const {
    FreezePolicy p;
    p.name = "finetune";
    const size_t last = std::min<size_t>(3, cfg.fusion_blocks);
    for (size_t i = cfg.fusion_blocks - last; i < cfg.fusion_blocks; ++i)
        p.rules.push_back({"fusion.block" + std::to_string(i) + ".*", true});
    p.rules.push_back({"heads.*", true});
    p.default_trainable = false;
    return p;
}

FreezePolicy Model::policy_by_name(const std::string& name) const {
    if (name == "pretrain") return pretrain_policy();
    if (name == "finetune") return finetune_policy();
    if (name == "all_trainable") {
        FreezePolicy p;
        p.name = name;
        p.rules.push_back({"ref_enc.*", false});
        p.default_trainable = true;
        return p;
    }
    if (name == "all_frozen") {
        FreezePolicy p;
        p.name = name;
        p.default_trainable = false;
        return p;
    }
    throw config_error("unknown freeze policy '" + name + "'");
}

ForwardResult forward_sample(Graph& g, const Model& model, const SampleView& sample,
                             const ForwardOpts& opts) {
    const ModelConfig& cfg = model.cfg;
    ForwardResult r;
    BuildCtx ctx{g, model.params, cfg, opts.with_grad, &r.bound};

    EncodeOut txt = encode_text_graph(ctx, *sample.text);
    EncodeOut img = encode_image_graph(ctx, *sample.image);

    EncodeOut multi;
    if (cfg.use_reference_branch)
        multi = encode_multimodal_graph(ctx, *sample.image, *sample.text);

    if (opts.align) {
        if (!opts.momentum)
            throw config_error("alignment losses need a momentum encoder state");
        BuildCtx mom_ctx{g, opts.momentum->shadow, cfg, false, nullptr};
        EncodeOut mtxt = encode_text_graph(mom_ctx, *sample.orig_text);
        EncodeOut mimg = encode_image_graph(mom_ctx, *sample.orig_image);
        const Tensor txt_pos = g.val(mtxt.proj_cls_id);
        const Tensor img_pos = g.val(mimg.proj_cls_id);
        if (sample.is_pristine) {
            r.mom_txt_key = txt_pos;
            r.mom_img_key = img_pos;
        } else {
            EncodeOut stxt = encode_text_graph(mom_ctx, *sample.text);
            EncodeOut simg = encode_image_graph(mom_ctx, *sample.image);
            r.mom_txt_key = g.val(stxt.proj_cls_id);
            r.mom_img_key = g.val(simg.proj_cls_id);
        }
        r.mac = mac_loss_graph(g, img.proj_cls_id, txt.proj_cls_id, img_pos, txt_pos,
                               opts.align->img_queue, opts.align->txt_queue,
                               opts.align->temperature);
        if (cfg.use_reference_branch) {
            r.cosal = cos_align_loss_graph(g, img.cls_id, txt.cls_id, multi.cls_id);
            r.align = align_loss_graph(g, r.mac, r.cosal, opts.align->lambda_cos);
        } else {
            r.cosal = -1;
            r.align = r.mac;
        }
    }

    r.fused = fusion_stack_graph(ctx, txt.avg_id, img.avg_id,
                                 cfg.use_reference_branch ? multi.avg_id : -1, txt.mask,
                                 cfg.use_reference_branch ? multi.mask : nullptr,
                                 opts.stash_attention ? &r.stash : nullptr);
    r.fused_cls = g.select_row(r.fused, 0);
    r.bin_logit = binary_head_graph(ctx, r.fused_cls);
    r.multi_logits = multilabel_head_graph(ctx, r.fused_cls);

    if (opts.compute_cls_loss) {
        r.cls_loss = classification_loss_graph(g, r.bin_logit, r.multi_logits, sample.labels);
        if (r.align >= 0)
            r.total = total_loss_graph(g, r.align, r.cls_loss, opts.w_align, opts.w_cls);
        else
            r.total = g.scale(r.cls_loss, opts.w_cls);
    }
    return r;
}

}  // namespace ladle
